#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crnn/audio.hpp"
#include "crnn/tensor.hpp"

namespace crnn {

/// Frontend parameters. Defaults give 88 semitones x 3 bins from A0 plus the
/// headroom needed to shift in the 4th harmonic.
struct FrontendConfig {
    int sample_rate = 22050;
    double fmin = 27.5;
    int bins_per_octave = 36;
    int n_pitch_bins = 264;
    int hop = 512;
    std::vector<int> harmonics{1, 2, 3, 4};
    double max_kernel_seconds = 2.0;
    double power_floor = 1e-10;

    /// Analysis bins: pitch bins plus the shift of the highest harmonic.
    int n_bins() const;
    double frame_rate() const { return static_cast<double>(sample_rate) / hop; }
    double log_floor() const;
    void validate() const;
};

/// Bin offset that aligns harmonic h with its fundamental.
int harmonic_shift(int harmonic, int bins_per_octave);

/// Immutable time-domain constant-Q filterbank.
class CqtPlan {
public:
    struct Kernel {
        std::vector<double> re;
        std::vector<double> im;
        std::size_t size() const { return re.size(); }
    };

    static CqtPlan design(int sample_rate, double fmin, int bins_per_octave, int n_bins, int hop,
                          double max_kernel_seconds = 2.0);
    static CqtPlan design(const FrontendConfig& cfg);

    int sample_rate() const { return sample_rate_; }
    double fmin() const { return fmin_; }
    int bins_per_octave() const { return bins_per_octave_; }
    int n_bins() const { return static_cast<int>(kernels_.size()); }
    int hop() const { return hop_; }
    double q_scale() const { return q_scale_; }
    std::size_t max_kernel_len() const { return max_kernel_len_; }
    double center_freq(int k) const;
    bool above_nyquist(int k) const { return kernels_.at(k).size() == 0; }
    const Kernel& kernel(int k) const { return kernels_.at(k); }

    /// Samples the kernels reach before / after the frame centre.
    std::size_t left_reach() const { return left_reach_; }
    std::size_t right_reach() const { return right_reach_; }

private:
    int sample_rate_ = 0;
    double fmin_ = 0;
    int bins_per_octave_ = 0;
    int hop_ = 0;
    double q_scale_ = 0;
    std::size_t max_kernel_len_ = 0;
    std::size_t left_reach_ = 0;
    std::size_t right_reach_ = 0;
    std::vector<Kernel> kernels_;
};

/// Streaming CQT magnitude analysis. Frame t is centred on sample t*hop;
/// samples before the stream start are zero. Emitted frames do not depend on
/// how the input was chunked.
class CqtStream {
public:
    explicit CqtStream(const CqtPlan& plan);

    /// Buffers a chunk and returns every frame whose support is now complete.
    std::vector<std::vector<double>> push(std::span<const double> chunk);
    /// Zero-pads the tail and returns the remaining frames (centres before the
    /// end of input). The stream must not be pushed afterwards.
    std::vector<std::vector<double>> finish();

    std::uint64_t frames_emitted() const { return next_frame_; }
    std::size_t buffered_samples() const { return buf_.size(); }
    /// Samples of input needed past a frame centre before it can be emitted.
    std::size_t latency_samples() const { return plan_->right_reach(); }
    void reset();

private:
    std::vector<double> frame_at(std::int64_t centre) const;
    void compact();

    const CqtPlan* plan_;
    std::vector<double> buf_;
    std::int64_t buf_start_ = 0;  // absolute sample index of buf_[0]
    std::int64_t received_ = 0;
    std::uint64_t next_frame_ = 0;
    bool finished_ = false;
};

/// Offline transform, defined as one push of the whole signal plus finish().
std::vector<std::vector<double>> cqt_magnitudes(const CqtPlan& plan, std::span<const double> samples);

/// log(max(m^2, power_floor)) elementwise.
double log_power(double magnitude, double power_floor);
std::vector<double> log_power(std::span<const double> magnitudes, double power_floor);

/// Frames x pitch-bins x harmonics log-power tensor, stored one FeatureMap
/// (harmonic channel x pitch bin) per frame.
struct HarmonicSpectrogram {
    std::vector<FeatureMap> frames;
    double frame_rate = 0.0;
    std::vector<int> harmonics;

    std::size_t n_frames() const { return frames.size(); }
    std::size_t n_bins() const { return frames.empty() ? 0 : frames.front().bins; }
    double at(std::size_t t, std::size_t k, std::size_t j) const { return frames[t].at(j, k); }
};

/// Builds one stacked frame: out[j][k] = log_frame[k + shift(h_j)], or the
/// log floor when that bin is out of range or above Nyquist.
FeatureMap stack_harmonics(std::span<const double> log_frame, const CqtPlan& plan,
                           std::span<const int> harmonics, int n_pitch_bins, double log_floor);

/// Complete streaming frontend: optional integer decimation, CQT, log power,
/// harmonic stacking.
class Frontend {
public:
    /// input_rate must equal cfg.sample_rate times a positive integer.
    Frontend(const FrontendConfig& cfg, int input_rate);
    explicit Frontend(const FrontendConfig& cfg) : Frontend(cfg, cfg.sample_rate) {}

    Frontend(const Frontend&) = delete;
    Frontend& operator=(const Frontend&) = delete;

    std::vector<FeatureMap> push(std::span<const double> chunk);
    std::vector<FeatureMap> finish();

    const CqtPlan& plan() const { return plan_; }
    const FrontendConfig& config() const { return cfg_; }

private:
    std::vector<FeatureMap> stack(std::vector<std::vector<double>> mags) const;

    FrontendConfig cfg_;
    CqtPlan plan_;
    Decimator decimator_;
    CqtStream stream_;
};

/// Offline convenience: whole buffer to spectrogram. Throws if the buffer's
/// rate is not an integer multiple of cfg.sample_rate.
HarmonicSpectrogram compute_spectrogram(const FrontendConfig& cfg, const AudioBuffer& audio);

}  // namespace crnn
