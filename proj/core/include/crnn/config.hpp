#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crnn/cqt.hpp"
#include "crnn/network.hpp"
#include "crnn/synth.hpp"
#include "crnn/trainer.hpp"

namespace crnn {

struct DecoderConfig {
    double theta_art = 0.5;
    double theta_sus = 0.5;
};

/// Every tunable of the pipeline. Text form is line-oriented `key = value`
/// with `#` comments and dotted module prefixes (`frontend.hop = 512`).
struct PipelineConfig {
    FrontendConfig frontend;
    NetworkConfig network;
    DecoderConfig decoder;
    TrainerConfig trainer;
    ScoreConfig score;
    SynthConfig synth;

    /// Applies `key = value` lines on top of the current values. Unknown keys
    /// and unparsable values throw ConfigError naming the source and line.
    void apply_text(std::string_view text, std::string_view source = "config");
    void set(std::string_view key, std::string_view value);

    static PipelineConfig parse(std::string_view text, std::string_view source = "config");
    static PipelineConfig load(const std::filesystem::path& path);

    /// Cross-module checks: network input matches the frontend, pooling lands
    /// on 88 pitches, thresholds in (0, 1).
    void validate() const;

    double input_frame_rate() const { return frontend.frame_rate(); }
    double output_frame_rate() const { return frontend.frame_rate() * network.upsample_factor; }

    /// Canonical text of the sections that define a model (frontend, network,
    /// decoder) or of everything.
    std::string model_text() const;
    std::string to_text() const;

    static std::vector<std::string> keys();
};

}  // namespace crnn
