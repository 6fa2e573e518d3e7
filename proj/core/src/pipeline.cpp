#include "crnn/pipeline.hpp"

#include "crnn/synth.hpp"

namespace crnn {

TrainingClip build_training_clip(std::string id, const AudioBuffer& audio, std::span<const TimedNote> notes,
                                 const PipelineConfig& cfg) {
    TrainingClip clip;
    clip.id = std::move(id);
    clip.inputs = compute_spectrogram(cfg.frontend, audio).frames;
    const std::size_t n_out = clip.inputs.size() * static_cast<std::size_t>(cfg.network.upsample_factor);
    const std::vector<TimedNote> list(notes.begin(), notes.end());
    clip.targets = targets_from_roll(label_roll(list, cfg.output_frame_rate(), n_out));
    return clip;
}

Transcriber::Transcriber(const PipelineConfig& cfg, const Parameters& params, int input_rate,
                         std::size_t chunk_frames)
    : cfg_(cfg),
      params_(params),
      net_(cfg.network),
      frontend_(cfg.frontend, input_rate),
      state_(StreamState::zeros(cfg.network)),
      decoder_(cfg.network.n_pitches_out(), cfg.decoder.theta_art, cfg.decoder.theta_sus),
      chunk_(chunk_frames == 0 ? 1 : chunk_frames) {}

void Transcriber::push(std::span<const double> samples) {
    for (auto& f : frontend_.push(samples)) pending_.push_back(std::move(f));
    run(false);
}

void Transcriber::run(bool flush) {
    std::size_t start = 0;
    while (pending_.size() - start >= chunk_ || (flush && start < pending_.size())) {
        const std::size_t n = std::min(chunk_, pending_.size() - start);
        const auto outputs = net_.forward(params_, state_, std::span(pending_).subspan(start, n));
        for (const auto& o : outputs) {
            if (on_output) on_output(o);
            decoder_.push(o);
        }
        input_frames_ += n;
        start += n;
    }
    pending_.erase(pending_.begin(), pending_.begin() + static_cast<std::ptrdiff_t>(start));
}

std::vector<NoteEvent> Transcriber::finish() {
    for (auto& f : frontend_.finish()) pending_.push_back(std::move(f));
    run(true);
    return decoder_.finish();
}

TranscribeResult transcribe_file(const std::filesystem::path& wav, const PipelineConfig& cfg, const Parameters& params,
                                 std::size_t chunk_frames, const std::function<void(const FeatureMap&)>& on_output) {
    WavReader reader(wav);
    Transcriber tr(cfg, params, reader.sample_rate(), chunk_frames);
    tr.on_output = on_output;
    std::uint64_t samples = 0;
    for (;;) {
        const auto block = reader.read(8192);
        if (block.empty()) break;
        samples += block.size();
        tr.push(block);
    }
    const auto notes = tr.finish();
    TranscribeResult res;
    res.output_frame_rate = tr.output_frame_rate();
    res.audio_seconds = static_cast<double>(samples) / reader.sample_rate();
    res.midi.notes = frames_to_seconds(notes, res.output_frame_rate);
    return res;
}

}  // namespace crnn
