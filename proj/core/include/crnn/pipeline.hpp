#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crnn/audio.hpp"
#include "crnn/config.hpp"
#include "crnn/midi.hpp"
#include "crnn/network.hpp"
#include "crnn/pianoroll.hpp"
#include "crnn/trainer.hpp"

namespace crnn {

/// Spectrogram inputs plus targets labelled at the network's output rate.
TrainingClip build_training_clip(std::string id, const AudioBuffer& audio, std::span<const TimedNote> notes,
                                 const PipelineConfig& cfg);

/// Audio in, notes out, with bounded memory: the frontend feeds the network
/// chunk_frames input frames at a time and outputs go straight to the
/// streaming decoder.
class Transcriber {
public:
    Transcriber(const PipelineConfig& cfg, const Parameters& params, int input_rate, std::size_t chunk_frames);

    void push(std::span<const double> samples);
    /// Flushes the frontend and network, closes open notes. Frames are at the
    /// output frame rate.
    std::vector<NoteEvent> finish();

    /// Called with every raw network output frame, in order.
    std::function<void(const FeatureMap&)> on_output;

    std::size_t input_frames() const { return input_frames_; }
    double output_frame_rate() const { return cfg_.output_frame_rate(); }

private:
    void run(bool flush);

    PipelineConfig cfg_;
    const Parameters& params_;
    Network net_;
    Frontend frontend_;
    StreamState state_;
    StreamingDecoder decoder_;
    std::size_t chunk_;
    std::vector<FeatureMap> pending_;
    std::size_t input_frames_ = 0;
};

struct TranscribeResult {
    MidiDocument midi;
    double audio_seconds = 0.0;
    double output_frame_rate = 0.0;
};

/// Streams a WAV file through a Transcriber in fixed-size sample blocks.
TranscribeResult transcribe_file(const std::filesystem::path& wav, const PipelineConfig& cfg, const Parameters& params,
                                 std::size_t chunk_frames,
                                 const std::function<void(const FeatureMap&)>& on_output = {});

}  // namespace crnn
