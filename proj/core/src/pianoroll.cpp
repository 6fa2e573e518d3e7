#include "crnn/pianoroll.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "crnn/error.hpp"
#include "crnn/io_util.hpp"

namespace crnn {

void sort_notes(std::vector<NoteEvent>& notes) {
    std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
        if (a.onset_frame != b.onset_frame) return a.onset_frame < b.onset_frame;
        if (a.pitch != b.pitch) return a.pitch < b.pitch;
        return a.offset_frame < b.offset_frame;
    });
}

PianoRoll encode(std::span<const NoteEvent> notes, std::size_t n_pitches, std::size_t n_frames, double frame_rate,
                 int lowest_pitch) {
    PianoRoll roll(n_pitches, n_frames, frame_rate, lowest_pitch);
    for (const auto& n : notes) {
        const int row = n.pitch - lowest_pitch;
        if (row < 0 || row >= static_cast<int>(n_pitches))
            throw std::invalid_argument("note pitch " + std::to_string(n.pitch) + " outside the roll");
        if (n.onset_frame < 0 || n.offset_frame <= n.onset_frame || n.offset_frame > static_cast<int>(n_frames))
            throw std::invalid_argument("note [" + std::to_string(n.onset_frame) + ", " +
                                        std::to_string(n.offset_frame) + ") outside the roll or empty");
        for (int t = n.onset_frame; t < n.offset_frame; ++t) {
            if (roll.sus(row, t) != 0.0)
                throw std::invalid_argument("overlapping notes at pitch " + std::to_string(n.pitch) + " frame " +
                                            std::to_string(t) + " cannot be encoded");
            roll.sus(row, t) = 1.0;
        }
        roll.art(row, n.onset_frame) = 1.0;
    }
    return roll;
}

StreamingDecoder::StreamingDecoder(std::size_t n_pitches, double theta_art, double theta_sus, int lowest_pitch)
    : n_pitches_(n_pitches),
      theta_art_(theta_art),
      theta_sus_(theta_sus),
      lowest_(lowest_pitch),
      prev_art_(n_pitches, -std::numeric_limits<double>::infinity()),
      cur_art_(n_pitches),
      cur_sus_(n_pitches),
      active_onset_(n_pitches, -1) {
    if (!(theta_art > 0 && theta_art < 1) || !(theta_sus > 0 && theta_sus < 1))
        throw std::invalid_argument("decoder thresholds must lie in (0, 1)");
}

void StreamingDecoder::decide(std::size_t t, std::span<const double> next_art) {
    const int ti = static_cast<int>(t);
    for (std::size_t r = 0; r < n_pitches_; ++r) {
        const double a = cur_art_[r];
        const bool peak = a > theta_art_ && a >= prev_art_[r] && a >= next_art[r];
        int& onset = active_onset_[r];
        if (onset >= 0 && ti > onset && (peak || cur_sus_[r] < theta_sus_)) {
            done_.push_back({lowest_ + static_cast<int>(r), onset, ti, 100});
            onset = -1;
        }
        if (peak) onset = ti;
    }
}

void StreamingDecoder::push(std::span<const double> art, std::span<const double> sus) {
    if (finished_) throw std::logic_error("StreamingDecoder::push after finish");
    if (art.size() != n_pitches_ || sus.size() != n_pitches_)
        throw ShapeError("decoder frame has the wrong number of pitches");
    if (frames_ > 0) {
        decide(frames_ - 1, art);
        prev_art_ = cur_art_;
    }
    std::copy(art.begin(), art.end(), cur_art_.begin());
    std::copy(sus.begin(), sus.end(), cur_sus_.begin());
    ++frames_;
}

void StreamingDecoder::push(const FeatureMap& frame) {
    if (frame.channels != 2) throw ShapeError("decoder expects 2-channel frames");
    push(frame.channel(0), frame.channel(1));
}

std::vector<NoteEvent> StreamingDecoder::finish() {
    if (!finished_) {
        if (frames_ > 0) {
            const std::vector<double> none(n_pitches_, -std::numeric_limits<double>::infinity());
            decide(frames_ - 1, none);
        }
        for (std::size_t r = 0; r < n_pitches_; ++r)
            if (active_onset_[r] >= 0) {
                done_.push_back({lowest_ + static_cast<int>(r), active_onset_[r], static_cast<int>(frames_), 100});
                active_onset_[r] = -1;
            }
        finished_ = true;
    }
    auto out = done_;
    sort_notes(out);
    return out;
}

std::vector<NoteEvent> decode(const PianoRoll& roll, double theta_art, double theta_sus) {
    StreamingDecoder dec(roll.n_pitches, theta_art, theta_sus, roll.lowest_pitch);
    std::vector<double> art(roll.n_pitches), sus(roll.n_pitches);
    for (std::size_t t = 0; t < roll.n_frames; ++t) {
        for (std::size_t r = 0; r < roll.n_pitches; ++r) {
            art[r] = roll.art(r, t);
            sus[r] = roll.sus(r, t);
        }
        dec.push(art, sus);
    }
    return dec.finish();
}

PianoRoll resample_roll(const PianoRoll& roll, int factor) {
    if (factor < 1) throw std::invalid_argument("resample factor must be >= 1");
    const auto f = static_cast<std::size_t>(factor);
    PianoRoll out(roll.n_pitches, roll.n_frames * f, roll.frame_rate * factor, roll.lowest_pitch);
    for (std::size_t r = 0; r < roll.n_pitches; ++r)
        for (std::size_t t = 0; t < roll.n_frames; ++t) {
            out.art(r, t * f) = roll.art(r, t);
            for (std::size_t k = 0; k < f; ++k) out.sus(r, t * f + k) = roll.sus(r, t);
        }
    return out;
}

PianoRoll roll_from_frames(std::span<const FeatureMap> frames, double frame_rate, int lowest_pitch) {
    const std::size_t pitches = frames.empty() ? 0 : frames.front().bins;
    PianoRoll roll(pitches, frames.size(), frame_rate, lowest_pitch);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        if (frames[t].channels != 2 || frames[t].bins != pitches) throw ShapeError("roll frames must be [2 x pitches]");
        for (std::size_t r = 0; r < pitches; ++r) {
            roll.art(r, t) = frames[t].at(0, r);
            roll.sus(r, t) = frames[t].at(1, r);
        }
    }
    return roll;
}

std::vector<std::uint8_t> write_roll(const PianoRoll& roll) {
    ByteWriter w;
    w.bytes("PROL");
    w.u32le(static_cast<std::uint32_t>(roll.n_pitches));
    w.u32le(static_cast<std::uint32_t>(roll.n_frames));
    w.f32le(static_cast<float>(roll.frame_rate));
    for (double v : roll.articulation) w.f32le(static_cast<float>(v));
    for (double v : roll.sustain) w.f32le(static_cast<float>(v));
    return std::move(w).take();
}

PianoRoll read_roll(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "roll file");
    if (r.string(4) != "PROL") throw FormatError("not a roll file (bad magic)");
    const std::size_t pitches = r.u32le();
    const std::size_t frames = r.u32le();
    const double fps = r.f32le();
    if (r.remaining() != pitches * frames * 8)
        throw FormatError("roll file payload size does not match its header");
    PianoRoll roll(pitches, frames, fps);
    for (double& v : roll.articulation) v = r.f32le();
    for (double& v : roll.sustain) v = r.f32le();
    return roll;
}

}  // namespace crnn
