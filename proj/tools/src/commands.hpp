#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace crnn::cli {

struct TranscribeArgs {
    std::string model, in, out;
    std::optional<double> theta_art, theta_sus;
    std::size_t chunk = 64;
};

struct TrainArgs {
    std::string config, data, out, loss_csv;
    std::uint64_t seed = 0;
};

struct EvalArgs {
    std::string pred, ref;
    double frame_rate = 22050.0 / 512.0 * 2.0;
};

struct SynthArgs {
    std::string config, out;
    std::size_t clips = 0;
    std::uint64_t seed = 0;
};

// Each throws FormatError (input) or ConfigError (config/model) on failure.
void cmd_transcribe(const TranscribeArgs& a, std::ostream& out);
void cmd_train(const TrainArgs& a, std::ostream& out);
void cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err);
void cmd_synth(const SynthArgs& a, std::ostream& out);

}  // namespace crnn::cli
