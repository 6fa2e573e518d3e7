#include <doctest.h>

#include "crnn/error.hpp"
#include "crnn/eval.hpp"
#include "crnn/random.hpp"
#include "oracles.hpp"

using namespace crnn;

namespace {

void check_prf(const PrfReport& r, double p, double rec, double f) {
    CHECK(r.precision == p);
    CHECK(r.recall == rec);
    CHECK(r.f_measure == f);
}

const std::vector<TimedNote> kTwo{{60, 0.5, 1.0, 100}, {64, 1.0, 1.5, 100}};

}  // namespace

TEST_CASE("counts to scores") {
    check_prf(PrfReport::from_counts(0, 0, 0), 1.0, 1.0, 1.0);
    check_prf(PrfReport::from_counts(0, 3, 0), 0.0, 1.0, 0.0);
    check_prf(PrfReport::from_counts(0, 0, 3), 1.0, 0.0, 0.0);
    check_prf(PrfReport::from_counts(0, 2, 2), 0.0, 0.0, 0.0);
    check_prf(PrfReport::from_counts(1, 0, 1), 1.0, 0.5, 2.0 / 3.0);
    auto a = PrfReport::from_counts(1, 0, 1);
    a += PrfReport::from_counts(1, 2, 0);
    CHECK(a.tp == 2);
    CHECK(a.fp == 2);
    CHECK(a.fn == 1);
    CHECK(a.precision == 0.5);
}

TEST_CASE("framewise examples") {
    const std::vector<double> ref{0, 1, 0, 1, 0, 0};
    check_prf(framewise_prf(ref, ref), 1.0, 1.0, 1.0);
    const std::vector<double> zero(6, 0.0);
    const auto r = framewise_prf(zero, ref);
    CHECK(r.recall == 0.0);
    CHECK(r.f_measure == 0.0);
    const std::vector<double> half{0, 1, 0, 0, 0, 0};
    check_prf(framewise_prf(half, ref), 1.0, 0.5, 2.0 / 3.0);
    CHECK_THROWS_AS(framewise_prf(std::vector<double>(5), ref), ShapeError);
}

TEST_CASE("framewise on rolls thresholds the prediction") {
    PianoRoll ref(2, 3), pred(2, 3);
    ref.sus(0, 1) = 1.0;
    ref.sus(1, 2) = 1.0;
    pred.sus(0, 1) = 0.7;
    pred.sus(1, 2) = 0.3;
    check_prf(framewise_prf(pred, ref), 1.0, 0.5, 2.0 / 3.0);
    check_prf(framewise_prf(pred, ref, 0.2), 1.0, 1.0, 1.0);
    CHECK_THROWS_AS(framewise_prf(PianoRoll(2, 4), ref), ShapeError);
}

TEST_CASE("note onset examples") {
    check_prf(note_onset_prf(kTwo, kTwo), 1.0, 1.0, 1.0);

    std::vector<TimedNote> shifted = kTwo;
    for (auto& n : shifted) n.onset += 0.05;
    check_prf(note_onset_prf(shifted, kTwo, 0.05), 1.0, 1.0, 1.0);
    for (auto& n : shifted) n.onset += 0.001;
    check_prf(note_onset_prf(shifted, kTwo, 0.05), 0.0, 0.0, 0.0);

    const std::vector<TimedNote> one{kTwo[0]};
    check_prf(note_onset_prf(one, kTwo), 1.0, 0.5, 2.0 / 3.0);

    std::vector<TimedNote> wrong_pitch = kTwo;
    wrong_pitch[0].pitch = 61;
    CHECK(note_onset_prf(wrong_pitch, kTwo).tp == 1);
    CHECK_THROWS(note_onset_prf(kTwo, kTwo, 0.0));
}

TEST_CASE("onset only ignores offsets") {
    std::vector<TimedNote> p = kTwo;
    p[0].offset = 3.0;
    check_prf(note_onset_prf(p, kTwo), 1.0, 1.0, 1.0);
}

TEST_CASE("note onset offset examples") {
    check_prf(note_onset_offset_prf(kTwo, kTwo), 1.0, 1.0, 1.0);

    const std::vector<TimedNote> ref{{60, 1.0, 2.0, 100}};
    const std::vector<TimedNote> late{{60, 1.0, 2.9, 100}};
    CHECK(note_onset_offset_prf(late, ref, 0.05, 0.2).tp == 0);

    const std::vector<TimedNote> short_ref{{60, 1.0, 1.1, 100}};
    const std::vector<TimedNote> near{{60, 1.0, 1.14, 100}};
    CHECK(note_onset_offset_prf(near, short_ref, 0.05, 0.2).tp == 1);
    const std::vector<TimedNote> far{{60, 1.0, 1.16, 100}};
    CHECK(note_onset_offset_prf(far, short_ref, 0.05, 0.2).tp == 0);

    // 20% of a 1 s note.
    const std::vector<TimedNote> edge{{60, 1.0, 2.2, 100}};
    CHECK(note_onset_offset_prf(edge, ref, 0.05, 0.2).tp == 1);

    CHECK_THROWS(note_onset_offset_prf(kTwo, kTwo, 0.05, 0.0));
    CHECK_THROWS(note_onset_offset_prf(kTwo, kTwo, 0.05, 1.5));
}

TEST_CASE("empty lists") {
    const std::vector<TimedNote> none;
    check_prf(note_onset_prf(none, none), 1.0, 1.0, 1.0);
    check_prf(note_onset_offset_prf(none, none), 1.0, 1.0, 1.0);
    check_prf(note_onset_prf(none, kTwo), 1.0, 0.0, 0.0);
    check_prf(note_onset_prf(kTwo, none), 0.0, 1.0, 0.0);
    check_prf(framewise_prf(std::vector<double>{}, std::vector<double>{}), 1.0, 1.0, 1.0);
}

TEST_CASE("scoring a list against itself is perfect") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        auto inst = oracle::random_match_instance(rng);
        if (inst.ref.empty()) continue;
        CHECK(note_onset_prf(inst.ref, inst.ref).f_measure == 1.0);
        CHECK(note_onset_offset_prf(inst.ref, inst.ref).f_measure == 1.0);
    }
}

TEST_CASE("unmatched additions never help") {
    Rng rng(22);
    for (int trial = 0; trial < 300; ++trial) {
        auto inst = oracle::random_match_instance(rng);
        const auto base = note_onset_prf(inst.pred, inst.ref);
        auto more_pred = inst.pred;
        more_pred.push_back({100, 5.0, 5.2, 100});
        CHECK(note_onset_prf(more_pred, inst.ref).precision <= base.precision);
        auto more_ref = inst.ref;
        more_ref.push_back({101, 6.0, 6.2, 100});
        CHECK(note_onset_prf(inst.pred, more_ref).recall <= base.recall);
        CHECK(base.tp <= std::min(inst.pred.size(), inst.ref.size()));
        CHECK(base.tp + base.fp == inst.pred.size());
        CHECK(base.tp + base.fn == inst.ref.size());
    }
}

TEST_CASE("greedy equals optimal on monophonic-per-pitch instances") {
    Rng rng(23);
    for (int trial = 0; trial < 500; ++trial) {
        const auto inst = oracle::random_match_instance(rng);
        for (bool offsets : {false, true}) {
            MatchCriterion c;
            c.use_offsets = offsets;
            REQUIRE(greedy_match_count(inst.pred, inst.ref, c) == oracle::optimal_match_count(inst.pred, inst.ref, c));
        }
    }
}

TEST_CASE("greedy can fall short of optimal on crossing onsets") {
    // Two close same-pitch references; the nearest pair blocks a second match.
    const std::vector<TimedNote> ref{{60, 0.0, 0.05, 100}, {60, 0.08, 0.2, 100}};
    const std::vector<TimedNote> pred{{60, 0.045, 0.1, 100}, {60, 0.13, 0.2, 100}};
    MatchCriterion c;
    CHECK(greedy_match_count(pred, ref, c) == 1);
    CHECK(oracle::optimal_match_count(pred, ref, c) == 2);
}

TEST_CASE("greedy ties go to the earlier reference") {
    // p0 is equidistant (exactly, in binary) from both references. Taking the
    // earlier one leaves r1 free for p1; the opposite rule would match once.
    const std::vector<TimedNote> ref{{60, 0.0, 0.2, 100}, {60, 0.0625, 0.3, 100}};
    const std::vector<TimedNote> pred{{60, 0.03125, 0.2, 100}, {60, 0.1, 0.3, 100}};
    MatchCriterion c;
    CHECK(greedy_match_count(pred, ref, c) == 2);
}

TEST_CASE("csv report") {
    CHECK(prf_csv_header() == "metric,precision,recall,f_measure,tp,fp,fn");
    CHECK(prf_csv_row("note_onset", PrfReport::from_counts(1, 0, 1)) ==
          "note_onset,1.000000,0.500000,0.666667,1,0,1");
}
