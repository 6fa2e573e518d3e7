#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crnn/midi.hpp"
#include "crnn/pianoroll.hpp"

namespace crnn {

struct PrfReport {
    double precision = 1.0;
    double recall = 1.0;
    double f_measure = 1.0;
    std::size_t tp = 0, fp = 0, fn = 0;

    /// Derives P/R/F from counts (P = 1 when nothing was predicted, R = 1 when
    /// nothing was expected, F = 0 when P + R = 0).
    static PrfReport from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
    PrfReport& operator+=(const PrfReport& o);
};

/// Cell-wise scores over two binary planes of equal size.
PrfReport framewise_prf(std::span<const double> pred, std::span<const double> ref);
/// Convenience: thresholds pred sustain at `threshold`, compares with ref sustain.
PrfReport framewise_prf(const PianoRoll& pred, const PianoRoll& ref, double threshold = 0.5);

inline constexpr double kOnsetTolerance = 0.05;
inline constexpr double kOffsetRatio = 0.2;
inline constexpr double kOffsetMinTolerance = 0.05;

/// Candidate (pred, ref) pairs allowed by the matching criterion.
struct MatchCriterion {
    double onset_tolerance = kOnsetTolerance;
    bool use_offsets = false;
    double offset_ratio = kOffsetRatio;
    double offset_min_tolerance = kOffsetMinTolerance;

    bool admits(const TimedNote& pred, const TimedNote& ref) const;
};

/// Greedy one-to-one matching: admissible pairs in increasing onset distance,
/// ties broken by earlier reference onset. Returns the number of matches.
std::size_t greedy_match_count(std::span<const TimedNote> pred, std::span<const TimedNote> ref,
                               const MatchCriterion& crit);

PrfReport note_onset_prf(std::span<const TimedNote> pred, std::span<const TimedNote> ref,
                         double tolerance_s = kOnsetTolerance);
PrfReport note_onset_offset_prf(std::span<const TimedNote> pred, std::span<const TimedNote> ref,
                                double onset_tol = kOnsetTolerance, double offset_ratio = kOffsetRatio);

/// `metric,precision,recall,f_measure,tp,fp,fn` header and one row.
std::string prf_csv_header();
std::string prf_csv_row(const std::string& metric, const PrfReport& r);

}  // namespace crnn
