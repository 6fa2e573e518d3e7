#include "crnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

#include "crnn/error.hpp"

namespace crnn {

PrfReport PrfReport::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    PrfReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double s = r.precision + r.recall;
    r.f_measure = s == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / s;
    return r;
}

PrfReport& PrfReport::operator+=(const PrfReport& o) {
    *this = from_counts(tp + o.tp, fp + o.fp, fn + o.fn);
    return *this;
}

PrfReport framewise_prf(std::span<const double> pred, std::span<const double> ref) {
    if (pred.size() != ref.size()) throw ShapeError("framewise_prf: planes differ in size");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0.0, r = ref[i] != 0.0;
        tp += p && r;
        fp += p && !r;
        fn += !p && r;
    }
    return PrfReport::from_counts(tp, fp, fn);
}

PrfReport framewise_prf(const PianoRoll& pred, const PianoRoll& ref, double threshold) {
    if (pred.n_pitches != ref.n_pitches || pred.n_frames != ref.n_frames)
        throw ShapeError("framewise_prf: roll shapes differ");
    std::vector<double> bin(pred.sustain.size());
    for (std::size_t i = 0; i < bin.size(); ++i) bin[i] = pred.sustain[i] >= threshold ? 1.0 : 0.0;
    return framewise_prf(bin, ref.sustain);
}

bool MatchCriterion::admits(const TimedNote& pred, const TimedNote& ref) const {
    // Closed intervals; the slack absorbs round-off in second-valued times.
    constexpr double slack = 1e-9;
    if (pred.pitch != ref.pitch) return false;
    if (std::abs(pred.onset - ref.onset) > onset_tolerance + slack) return false;
    if (use_offsets) {
        const double tol = std::max(offset_ratio * (ref.offset - ref.onset), offset_min_tolerance);
        if (std::abs(pred.offset - ref.offset) > tol + slack) return false;
    }
    return true;
}

std::size_t greedy_match_count(std::span<const TimedNote> pred, std::span<const TimedNote> ref,
                               const MatchCriterion& crit) {
    struct Cand {
        double dist;
        double ref_onset;
        std::size_t ri, pi;
    };
    std::vector<Cand> cands;
    for (std::size_t pi = 0; pi < pred.size(); ++pi)
        for (std::size_t ri = 0; ri < ref.size(); ++ri)
            if (crit.admits(pred[pi], ref[ri]))
                cands.push_back({std::abs(pred[pi].onset - ref[ri].onset), ref[ri].onset, ri, pi});
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        return std::tie(a.dist, a.ref_onset, a.ri, a.pi) < std::tie(b.dist, b.ref_onset, b.ri, b.pi);
    });
    std::vector<bool> used_p(pred.size()), used_r(ref.size());
    std::size_t matched = 0;
    for (const auto& c : cands) {
        if (used_p[c.pi] || used_r[c.ri]) continue;
        used_p[c.pi] = used_r[c.ri] = true;
        ++matched;
    }
    return matched;
}

namespace {

PrfReport score(std::size_t matched, std::size_t n_pred, std::size_t n_ref) {
    return PrfReport::from_counts(matched, n_pred - matched, n_ref - matched);
}

}  // namespace

PrfReport note_onset_prf(std::span<const TimedNote> pred, std::span<const TimedNote> ref, double tolerance_s) {
    if (!(tolerance_s > 0)) throw std::invalid_argument("onset tolerance must be positive");
    MatchCriterion c;
    c.onset_tolerance = tolerance_s;
    return score(greedy_match_count(pred, ref, c), pred.size(), ref.size());
}

PrfReport note_onset_offset_prf(std::span<const TimedNote> pred, std::span<const TimedNote> ref, double onset_tol,
                                double offset_ratio) {
    if (!(onset_tol > 0)) throw std::invalid_argument("onset tolerance must be positive");
    if (!(offset_ratio > 0 && offset_ratio <= 1)) throw std::invalid_argument("offset ratio must lie in (0, 1]");
    MatchCriterion c;
    c.onset_tolerance = onset_tol;
    c.use_offsets = true;
    c.offset_ratio = offset_ratio;
    return score(greedy_match_count(pred, ref, c), pred.size(), ref.size());
}

std::string prf_csv_header() { return "metric,precision,recall,f_measure,tp,fp,fn"; }

std::string prf_csv_row(const std::string& metric, const PrfReport& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%zu,%zu,%zu", r.precision, r.recall, r.f_measure, r.tp, r.fp,
                  r.fn);
    return metric + buf;
}

}  // namespace crnn
