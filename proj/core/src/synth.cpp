#include "crnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "crnn/error.hpp"
#include "crnn/random.hpp"

namespace crnn {

void ScoreConfig::validate() const {
    auto fail = [](const char* m) { throw ConfigError(std::string("score config: ") + m); };
    if (pitch_min < kLowestPitch || pitch_max > kLowestPitch + kPitchCount - 1 || pitch_min > pitch_max)
        fail("pitch range must be non-empty and within MIDI 21..108");
    if (max_polyphony < 1) fail("max_polyphony must be >= 1");
    if (!(duration_min > 0) || duration_min > duration_max) fail("duration range must be non-empty and positive");
    if (!(clip_seconds >= duration_min)) fail("clip must be at least as long as the shortest note");
    if (notes_min < 0 || notes_min > notes_max) fail("notes-per-clip range must be non-empty");
}

void SynthConfig::validate() const {
    auto fail = [](const char* m) { throw ConfigError(std::string("synth config: ") + m); };
    if (n_partials < 1) fail("n_partials must be >= 1");
    if (peak_amplitude < 0) fail("amplitudes must be non-negative");
    if (!(limiter_threshold > 0 && limiter_threshold <= 1)) fail("limiter threshold must lie in (0, 1]");
    if (attack_seconds < 0 || release_seconds < 0) fail("envelope times must be non-negative");
}

double midi_to_hz(int pitch) { return 440.0 * std::exp2((pitch - 69) / 12.0); }

namespace {

bool fits(const std::vector<TimedNote>& notes, const TimedNote& cand, int max_poly) {
    std::vector<std::pair<double, int>> edges;
    for (const auto& n : notes) {
        if (n.offset <= cand.onset || n.onset >= cand.offset) continue;
        if (n.pitch == cand.pitch) return false;
        edges.emplace_back(std::max(n.onset, cand.onset), +1);
        edges.emplace_back(std::min(n.offset, cand.offset), -1);
    }
    // Ends sort before starts at equal times (half-open intervals).
    std::sort(edges.begin(), edges.end());
    int active = 1, peak = 1;
    for (const auto& [t, d] : edges) {
        active += d;
        peak = std::max(peak, active);
    }
    return peak <= max_poly;
}

}  // namespace

std::vector<TimedNote> sample_score(const ScoreConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const auto count = rng.integer(cfg.notes_min, cfg.notes_max);
    std::vector<TimedNote> notes;
    constexpr int kRetries = 200;
    for (std::int64_t i = 0; i < count; ++i) {
        for (int attempt = 0; attempt < kRetries; ++attempt) {
            TimedNote n;
            n.pitch = static_cast<int>(rng.integer(cfg.pitch_min, cfg.pitch_max));
            const double dur = rng.uniform(cfg.duration_min, cfg.duration_max);
            const double d = std::min(dur, cfg.clip_seconds);
            n.onset = rng.uniform(0.0, cfg.clip_seconds - d);
            n.offset = n.onset + d;
            if (fits(notes, n, cfg.max_polyphony)) {
                notes.push_back(n);
                break;
            }
        }
    }
    std::sort(notes.begin(), notes.end(), [](const TimedNote& a, const TimedNote& b) {
        return a.onset != b.onset ? a.onset < b.onset : a.pitch < b.pitch;
    });
    return notes;
}

RenderResult render(const std::vector<TimedNote>& notes, const SynthConfig& cfg, int sample_rate,
                    double clip_seconds, std::uint64_t seed) {
    cfg.validate();
    if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
    double end = clip_seconds;
    for (const auto& n : notes) end = std::max(end, n.offset);
    RenderResult res;
    res.audio.sample_rate = sample_rate;
    res.audio.samples.assign(static_cast<std::size_t>(std::ceil(end * sample_rate)), 0.0);
    auto& out = res.audio.samples;

    Rng rng(seed);
    const double nyquist = sample_rate / 2.0;
    for (const auto& n : notes) {
        const double f0 = midi_to_hz(n.pitch);
        const auto first = static_cast<std::size_t>(std::ceil(n.onset * sample_rate));
        const auto last = std::min(out.size(), static_cast<std::size_t>(std::ceil(n.offset * sample_rate)));
        const double dur = n.offset - n.onset;
        const double attack = std::min(cfg.attack_seconds, dur / 2);
        const double release = std::min(cfg.release_seconds, dur / 2);
        for (int k = 1; k <= cfg.n_partials; ++k) {
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            if (k * f0 >= nyquist) continue;
            const double amp = cfg.peak_amplitude / k;
            const double w = 2.0 * std::numbers::pi * k * f0;
            for (std::size_t i = first; i < last; ++i) {
                const double t = static_cast<double>(i) / sample_rate;
                const double rel = t - n.onset;
                double env = 1.0;
                if (attack > 0 && rel < attack) env = rel / attack;
                if (release > 0 && n.offset - t < release) env = std::min(env, (n.offset - t) / release);
                out[i] += amp * env * std::sin(w * rel + phase);
            }
        }
    }
    for (double& s : out) {
        if (std::abs(s) > cfg.limiter_threshold) {
            ++res.clipped_samples;
            s = std::clamp(s, -cfg.limiter_threshold, cfg.limiter_threshold);
        }
    }
    return res;
}

PianoRoll label_roll(const std::vector<TimedNote>& notes, double frame_rate, std::size_t n_frames, int n_pitches,
                     int lowest_pitch) {
    std::vector<NoteEvent> events;
    for (const auto& e : seconds_to_frames(notes, frame_rate)) {
        if (e.onset_frame >= static_cast<int>(n_frames)) continue;
        NoteEvent c = e;
        c.offset_frame = std::min(c.offset_frame, static_cast<int>(n_frames));
        events.push_back(c);
    }
    return encode(events, static_cast<std::size_t>(n_pitches), n_frames, frame_rate, lowest_pitch);
}

SynthClip make_clip(const ScoreConfig& score, const SynthConfig& synth, int sample_rate, std::uint64_t master_seed,
                    std::size_t index) {
    SynthClip clip;
    clip.seed = Rng::derive(master_seed, index);
    clip.notes = sample_score(score, clip.seed);
    clip.rendered = render(clip.notes, synth, sample_rate, score.clip_seconds, Rng::derive(clip.seed, 1));
    return clip;
}

}  // namespace crnn
