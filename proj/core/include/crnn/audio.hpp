#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

namespace crnn {

/// Mono sample stream in [-1, 1] at a fixed rate.
struct AudioBuffer {
    std::vector<double> samples;
    int sample_rate = 0;

    double duration() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
    /// Throws std::invalid_argument if the rate is not positive or a sample is not finite.
    void validate() const;
};

/// Incremental RIFF/WAVE reader. Accepts PCM16 and IEEE float32 (also via
/// WAVE_FORMAT_EXTENSIBLE); multi-channel input is averaged down to mono.
class WavReader {
public:
    explicit WavReader(const std::filesystem::path& path);

    int sample_rate() const { return sample_rate_; }
    int channels() const { return channels_; }
    std::uint64_t total_frames() const { return total_frames_; }
    std::uint64_t remaining_frames() const { return total_frames_ - read_frames_; }

    /// Reads up to max_frames mono samples; returns an empty vector at end of data.
    std::vector<double> read(std::size_t max_frames);

private:
    std::ifstream in_;
    int sample_rate_ = 0;
    int channels_ = 0;
    int bits_ = 0;
    bool is_float_ = false;
    std::uint64_t total_frames_ = 0;
    std::uint64_t read_frames_ = 0;
};

AudioBuffer read_wav(const std::filesystem::path& path);

enum class WavEncoding { Pcm16, Float32 };

/// Serializes a mono buffer as a canonical 44-byte-header WAVE file.
std::vector<std::uint8_t> encode_wav(const AudioBuffer& audio, WavEncoding enc = WavEncoding::Float32);
void write_wav(const std::filesystem::path& path, const AudioBuffer& audio,
               WavEncoding enc = WavEncoding::Float32);

/// Streaming integer-factor decimator: windowed-sinc low-pass then keep every
/// factor-th sample. Factor 1 passes samples through unchanged.
class Decimator {
public:
    explicit Decimator(int factor);

    int factor() const { return factor_; }
    std::vector<double> push(std::span<const double> in);

private:
    int factor_;
    std::vector<double> taps_;
    std::vector<double> history_;  // last taps_.size()-1 inputs
    std::uint64_t phase_ = 0;      // absolute index of the next input sample
};

}  // namespace crnn
