#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "crnn/error.hpp"
#include "crnn/midi.hpp"
#include "crnn/random.hpp"

using namespace crnn;
using Bytes = std::vector<std::uint8_t>;

namespace {

MidiDocument fixture() {
    MidiDocument d;
    d.notes = {{60, 0.0, 0.5, 100}, {64, 0.5, 1.0, 90}};
    return d;
}

// Wraps a raw track body in a format-0 header with ppq 480.
Bytes smf_with_track(const Bytes& track, std::uint16_t format = 0, std::uint16_t ntrks = 1) {
    Bytes out{'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, static_cast<std::uint8_t>(format), 0,
              static_cast<std::uint8_t>(ntrks), 0x01, 0xE0};
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    const auto n = static_cast<std::uint32_t>(track.size());
    out.insert(out.end(), {static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                           static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)});
    out.insert(out.end(), track.begin(), track.end());
    return out;
}

void append_track(Bytes& smf, const Bytes& track) {
    smf.insert(smf.end(), {'M', 'T', 'r', 'k', 0, 0, 0, static_cast<std::uint8_t>(track.size())});
    smf.insert(smf.end(), track.begin(), track.end());
}

}  // namespace

TEST_CASE("golden bytes for a two-note document") {
    const Bytes golden{
        0x4D, 0x54, 0x68, 0x64, 0x00, 0x00, 0x00, 0x06, 0x00, 0x00, 0x00, 0x01, 0x01, 0xE0,
        0x4D, 0x54, 0x72, 0x6B, 0x00, 0x00, 0x00, 0x1D,
        0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20,
        0x00, 0x90, 0x3C, 0x64,
        0x83, 0x60, 0x80, 0x3C, 0x00,
        0x00, 0x90, 0x40, 0x5A,
        0x83, 0x60, 0x80, 0x40, 0x00,
        0x00, 0xFF, 0x2F, 0x00,
    };
    CHECK(write_smf(fixture()) == golden);
    CHECK(write_smf(fixture()) == write_smf(fixture()));
}

TEST_CASE("header and first event constants") {
    MidiDocument d;
    d.notes = {{60, 0.0, 0.25, 100}};
    const auto b = write_smf(d);
    CHECK(Bytes(b.begin(), b.begin() + 14) ==
          Bytes{0x4D, 0x54, 0x68, 0x64, 0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0});
    CHECK(Bytes(b.begin() + 29, b.begin() + 33) == Bytes{0x00, 0x90, 0x3C, 0x64});
}

TEST_CASE("variable-length quantities") {
    auto vlq = [](std::uint32_t v) {
        Bytes out;
        append_vlq(out, v);
        return out;
    };
    CHECK(vlq(0) == Bytes{0x00});
    CHECK(vlq(0x7F) == Bytes{0x7F});
    CHECK(vlq(128) == Bytes{0x81, 0x00});
    CHECK(vlq(0x3FFF) == Bytes{0xFF, 0x7F});
    CHECK(vlq(0x4000) == Bytes{0x81, 0x80, 0x00});
    CHECK(vlq(0x0FFFFFFF) == Bytes{0xFF, 0xFF, 0xFF, 0x7F});
    CHECK_THROWS_AS(vlq(0x10000000), std::overflow_error);
}

TEST_CASE("ticks beyond 28 bits are rejected") {
    MidiDocument d;
    d.notes = {{60, 0.0, 300000.0, 100}};  // 2.88e8 ticks
    CHECK_THROWS_AS(write_smf(d), std::overflow_error);
}

TEST_CASE("empty document holds only tempo and end of track") {
    const auto b = write_smf(MidiDocument{});
    const Bytes track(b.begin() + 22, b.end());
    CHECK(track == Bytes{0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x00, 0xFF, 0x2F, 0x00});
    const auto d = read_smf(b);
    CHECK(d.notes.empty());
    CHECK(d.tempo == 500000);
    CHECK(d.ppq == 480);
}

TEST_CASE("round trip stays within half a tick") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        MidiDocument d;
        d.ppq = trial % 2 ? 480 : 96;
        d.tempo = trial % 3 ? 500000 : 600000;
        double t = 0.0;
        for (int i = 0; i < 20; ++i) {
            t += rng.uniform(0.0, 0.3);
            d.notes.push_back({static_cast<int>(rng.integer(21, 108)), t, t + rng.uniform(0.05, 1.0),
                               static_cast<int>(rng.integer(1, 127))});
        }
        std::sort(d.notes.begin(), d.notes.end(), [](const TimedNote& a, const TimedNote& b) {
            return std::tie(a.onset, a.pitch) < std::tie(b.onset, b.pitch);
        });
        // Same-pitch overlaps are not representable; keep the first.
        std::vector<TimedNote> kept;
        for (const auto& n : d.notes) {
            bool clash = false;
            for (const auto& k : kept)
                if (k.pitch == n.pitch && n.onset < k.offset + 0.01) clash = true;
            if (!clash) kept.push_back(n);
        }
        // The reader orders by quantised onset, so compare in that order.
        std::stable_sort(kept.begin(), kept.end(), [&](const TimedNote& a, const TimedNote& b) {
            return std::pair(d.to_tick(a.onset), a.pitch) < std::pair(d.to_tick(b.onset), b.pitch);
        });
        d.notes = kept;
        const auto back = read_smf(write_smf(d));
        REQUIRE(back.notes.size() == d.notes.size());
        const double half_tick = 0.5 * d.seconds_per_tick() + 1e-12;
        for (std::size_t i = 0; i < d.notes.size(); ++i) {
            CHECK(back.notes[i].pitch == d.notes[i].pitch);
            CHECK(back.notes[i].velocity == d.notes[i].velocity);
            CHECK(std::abs(back.notes[i].onset - d.notes[i].onset) <= half_tick);
            CHECK(std::abs(back.notes[i].offset - d.notes[i].offset) <= half_tick);
        }
    }
}

TEST_CASE("note-offs precede note-ons at equal ticks") {
    MidiDocument d;
    d.notes = {{62, 0.5, 1.0, 80}, {60, 0.0, 0.5, 100}};
    const auto b = write_smf(d);
    // After the tempo meta: on 60, then at tick 480 off 60 before on 62.
    CHECK(Bytes(b.begin() + 29, b.begin() + 42) ==
          Bytes{0x00, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0x00, 0x00, 0x90, 62, 80});
}

TEST_CASE("unpaired note-on names pitch and tick") {
    const Bytes track{0x00, 0x90, 0x3C, 0x64, 0x83, 0x60, 0x90, 0x40, 0x64, 0x10, 0x80, 0x40, 0x00, 0x00, 0xFF, 0x2F, 0x00};
    try {
        read_smf(smf_with_track(track));
        FAIL("expected a FormatError");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("pitch 60") != std::string::npos);
        CHECK(msg.find("tick 0") != std::string::npos);
    }
}

TEST_CASE("running status") {
    // Note-on 60, then 64 under running status, then offs as velocity-0 note-ons.
    const Bytes track{0x00, 0x90, 60, 100, 0x00, 64, 90, 0x83, 0x60, 60, 0, 0x00, 64, 0, 0x00, 0xFF, 0x2F, 0x00};
    const auto d = read_smf(smf_with_track(track));
    REQUIRE(d.notes.size() == 2);
    CHECK(d.notes[0] == TimedNote{60, 0.0, 0.5, 100});
    CHECK(d.notes[1] == TimedNote{64, 0.0, 0.5, 90});

    const Bytes bad{0x00, 60, 100, 0x00, 0xFF, 0x2F, 0x00};
    CHECK_THROWS_AS(read_smf(smf_with_track(bad)), FormatError);
}

TEST_CASE("tempo changes are rejected") {
    const Bytes track{0x00, 0xFF, 0x51, 0x03, 0x07, 0xA1, 0x20, 0x10, 0xFF, 0x51, 0x03, 0x06, 0x1A, 0x80, 0x00, 0xFF, 0x2F, 0x00};
    CHECK_THROWS_WITH_AS(read_smf(smf_with_track(track)), doctest::Contains("tempo change"), FormatError);
}

TEST_CASE("format 1 tracks merge by absolute tick") {
    auto smf = smf_with_track({0x00, 0xFF, 0x51, 0x03, 0x0F, 0x42, 0x40, 0x00, 0xFF, 0x2F, 0x00}, 1, 2);
    append_track(smf, {0x00, 0x90, 60, 100, 0x87, 0x40, 0x80, 60, 0, 0x00, 0xFF, 0x2F, 0x00});
    const auto d = read_smf(smf);
    CHECK(d.tempo == 1000000);
    REQUIRE(d.notes.size() == 1);
    CHECK(d.notes[0].offset == doctest::Approx(2.0));  // 960 ticks at 1 s per quarter
}

TEST_CASE("malformed files") {
    CHECK_THROWS_AS(read_smf(Bytes{'R', 'I', 'F', 'F'}), FormatError);
    auto b = write_smf(fixture());
    b.resize(b.size() - 5);
    CHECK_THROWS_AS(read_smf(b), FormatError);
    auto smpte = write_smf(fixture());
    smpte[12] = 0xE7;
    CHECK_THROWS_AS(read_smf(smpte), FormatError);
}

TEST_CASE("invalid documents are refused by the writer") {
    MidiDocument d;
    d.notes = {{60, 0.5, 0.5, 100}};
    CHECK_THROWS(write_smf(d));
    d.notes = {{60, 0.0, 0.5, 0}};
    CHECK_THROWS(write_smf(d));
    d = MidiDocument{};
    d.ppq = 0;
    CHECK_THROWS(write_smf(d));
}

TEST_CASE("frames and seconds") {
    const std::vector<NoteEvent> frames{{60, 10, 20}, {61, 0, 1, 70}};
    const auto s = frames_to_seconds(frames, 100.0);
    CHECK(s[0].onset == doctest::Approx(0.1));
    CHECK(s[0].offset == doctest::Approx(0.2));
    CHECK(s[1].velocity == 70);
    CHECK(seconds_to_frames(s, 100.0) == frames);

    const double fps = 86.1328125;
    for (int f = 0; f < 2000; ++f) {
        const std::vector<NoteEvent> one{{60, f, f + 1}};
        MidiDocument d;
        d.notes = frames_to_seconds(one, fps);
        const auto back = read_smf(write_smf(d));
        CHECK(seconds_to_frames(back.notes, fps, 0.5 * back.seconds_per_tick()) == one);
    }
    const std::vector<TimedNote> tiny{{60, 0.1001, 0.1002, 100}};
    const auto widened = seconds_to_frames(tiny, 100.0);
    CHECK(widened[0].offset_frame == widened[0].onset_frame + 1);
}
