#pragma once

#include <cstdint>
#include <vector>

#include "crnn/audio.hpp"
#include "crnn/midi.hpp"
#include "crnn/pianoroll.hpp"

namespace crnn {

struct ScoreConfig {
    int pitch_min = 36;
    int pitch_max = 84;
    int max_polyphony = 4;
    double duration_min = 0.2;
    double duration_max = 1.5;
    double clip_seconds = 4.0;
    int notes_min = 4;
    int notes_max = 16;

    /// Throws ConfigError for configs that admit no valid score.
    void validate() const;
};

struct SynthConfig {
    int n_partials = 8;
    double attack_seconds = 0.010;
    double release_seconds = 0.030;
    double peak_amplitude = 0.25;
    double limiter_threshold = 1.0;

    void validate() const;
};

/// Random polyphonic score: no same-pitch overlaps, at most max_polyphony
/// notes sounding at any instant. Draws that cannot be placed after a bounded
/// number of retries are dropped, so the score may hold fewer than the sampled
/// note count. Sorted by (onset, pitch).
std::vector<TimedNote> sample_score(const ScoreConfig& cfg, std::uint64_t seed);

double midi_to_hz(int pitch);

struct RenderResult {
    AudioBuffer audio;
    std::size_t clipped_samples = 0;
};

/// Additive synthesis with 1/k partials below Nyquist, random partial phases,
/// linear attack and release inside each note's span. Output length covers
/// clip_seconds (or the last offset, whichever is later).
RenderResult render(const std::vector<TimedNote>& notes, const SynthConfig& cfg, int sample_rate,
                    double clip_seconds, std::uint64_t seed);

/// Ground-truth roll for a clip at the given frame rate (frames = floor(t * fps)).
/// Notes beyond n_frames are clipped or dropped.
PianoRoll label_roll(const std::vector<TimedNote>& notes, double frame_rate, std::size_t n_frames,
                     int n_pitches = kPitchCount, int lowest_pitch = kLowestPitch);

struct SynthClip {
    std::vector<TimedNote> notes;
    RenderResult rendered;
    std::uint64_t seed = 0;
};

/// Clip `index` of a dataset; its seed depends only on (master_seed, index).
SynthClip make_clip(const ScoreConfig& score, const SynthConfig& synth, int sample_rate, std::uint64_t master_seed,
                    std::size_t index);

}  // namespace crnn
