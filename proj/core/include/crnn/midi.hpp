#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crnn/pianoroll.hpp"

namespace crnn {

/// A note with times in seconds.
struct TimedNote {
    int pitch = 60;
    double onset = 0.0;
    double offset = 0.0;
    int velocity = 100;

    friend bool operator==(const TimedNote&, const TimedNote&) = default;
};

struct MidiDocument {
    int ppq = 480;
    std::uint32_t tempo = 500000;  // microseconds per quarter note
    std::vector<TimedNote> notes;

    void validate() const;
    double seconds_per_tick() const { return tempo * 1e-6 / ppq; }
    std::int64_t to_tick(double seconds) const;
};

/// Variable-length quantity, big-endian base-128. Throws above 0x0FFFFFFF.
void append_vlq(std::vector<std::uint8_t>& out, std::uint32_t value);

/// Format-0 single-track SMF: tempo meta, note-on/off pairs on channel 0,
/// events ordered by (tick, note-offs first, pitch), end-of-track.
std::vector<std::uint8_t> write_smf(const MidiDocument& doc);

/// Parses format 0 or 1. Throws FormatError for malformed chunks, running
/// status without a prior status byte, unpaired note-ons and tempo changes.
MidiDocument read_smf(std::span<const std::uint8_t> bytes);

std::vector<TimedNote> frames_to_seconds(std::span<const NoteEvent> notes, double frame_rate);
/// onset/offset frames = floor((seconds + slack) * frame_rate); notes that
/// collapse to zero length are widened to one frame. Pass half a tick as
/// slack for times read back from a file so frame boundaries survive tick
/// rounding.
std::vector<NoteEvent> seconds_to_frames(std::span<const TimedNote> notes, double frame_rate,
                                         double slack_seconds = 0.0);

}  // namespace crnn
