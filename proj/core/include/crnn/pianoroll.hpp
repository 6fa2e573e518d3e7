#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "crnn/tensor.hpp"

namespace crnn {

inline constexpr int kLowestPitch = 21;   // A0
inline constexpr int kPitchCount = 88;    // up to C8 (MIDI 108)

/// A note as a half-open frame interval [onset_frame, offset_frame).
struct NoteEvent {
    int pitch = 60;
    int onset_frame = 0;
    int offset_frame = 1;
    int velocity = 100;

    friend auto operator<=>(const NoteEvent&, const NoteEvent&) = default;
};

/// Sorts by (onset, pitch, offset).
void sort_notes(std::vector<NoteEvent>& notes);

/// Two planes, each row-major (pitch row, frame). Row r is MIDI pitch lowest_pitch + r.
struct PianoRoll {
    std::size_t n_pitches = 0;
    std::size_t n_frames = 0;
    double frame_rate = 0.0;
    int lowest_pitch = kLowestPitch;
    std::vector<double> articulation;
    std::vector<double> sustain;

    PianoRoll() = default;
    PianoRoll(std::size_t pitches, std::size_t frames, double fps = 0.0, int lowest = kLowestPitch)
        : n_pitches(pitches), n_frames(frames), frame_rate(fps), lowest_pitch(lowest),
          articulation(pitches * frames, 0.0), sustain(pitches * frames, 0.0) {}

    double& art(std::size_t row, std::size_t t) { return articulation[row * n_frames + t]; }
    double art(std::size_t row, std::size_t t) const { return articulation[row * n_frames + t]; }
    double& sus(std::size_t row, std::size_t t) { return sustain[row * n_frames + t]; }
    double sus(std::size_t row, std::size_t t) const { return sustain[row * n_frames + t]; }

    friend bool operator==(const PianoRoll&, const PianoRoll&) = default;
};

/// Ground-truth roll. Throws std::invalid_argument for notes out of bounds or
/// overlapping notes of the same pitch.
PianoRoll encode(std::span<const NoteEvent> notes, std::size_t n_pitches, std::size_t n_frames,
                 double frame_rate = 0.0, int lowest_pitch = kLowestPitch);

/// Incremental peak picker. A note opens at a frame whose articulation exceeds
/// theta_art and is a local maximum of its row (ties count); it closes at the
/// first later frame whose sustain is below theta_sus, or is fragmented when
/// another articulation peak arrives. Decisions lag input by one frame.
class StreamingDecoder {
public:
    StreamingDecoder(std::size_t n_pitches, double theta_art, double theta_sus, int lowest_pitch = kLowestPitch);

    /// One frame: art and sus each hold n_pitches values.
    void push(std::span<const double> art, std::span<const double> sus);
    /// Convenience for network output frames (channel 0 articulation, channel 1 sustain).
    void push(const FeatureMap& frame);
    /// Closes still-active notes at the end of the stream and returns every
    /// note, sorted by (onset, pitch).
    std::vector<NoteEvent> finish();

    std::size_t frames_seen() const { return frames_; }
    /// Notes completed so far (unsorted); finish() includes them.
    std::size_t completed() const { return done_.size(); }

private:
    void decide(std::size_t t, std::span<const double> next_art);

    std::size_t n_pitches_;
    double theta_art_, theta_sus_;
    int lowest_;
    std::size_t frames_ = 0;
    std::vector<double> prev_art_, cur_art_, cur_sus_;
    std::vector<int> active_onset_;  // -1 when no note is active
    std::vector<NoteEvent> done_;
    bool finished_ = false;
};

std::vector<NoteEvent> decode(const PianoRoll& roll, double theta_art, double theta_sus);

/// Raises the frame rate by an integer factor: sustain repeated, articulation
/// only on the first copy of each source frame.
PianoRoll resample_roll(const PianoRoll& roll, int factor);

/// Stacks network output frames ([2 x pitches] each) into a roll.
PianoRoll roll_from_frames(std::span<const FeatureMap> frames, double frame_rate, int lowest_pitch = kLowestPitch);

/// "PROL" interchange file: u32 pitches, u32 frames, f32 frame rate, then the
/// articulation and sustain planes as f32, all little-endian.
std::vector<std::uint8_t> write_roll(const PianoRoll& roll);
PianoRoll read_roll(std::span<const std::uint8_t> bytes);

}  // namespace crnn
