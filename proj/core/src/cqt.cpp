#include "crnn/cqt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "crnn/error.hpp"

namespace crnn {

int harmonic_shift(int harmonic, int bins_per_octave) {
    if (harmonic < 1) throw std::invalid_argument("harmonic numbers must be >= 1");
    return static_cast<int>(std::lround(bins_per_octave * std::log2(static_cast<double>(harmonic))));
}

int FrontendConfig::n_bins() const {
    int max_shift = 0;
    for (int h : harmonics) max_shift = std::max(max_shift, harmonic_shift(h, bins_per_octave));
    return n_pitch_bins + max_shift;
}

double FrontendConfig::log_floor() const { return std::log(power_floor); }

void FrontendConfig::validate() const {
    if (sample_rate <= 0) throw ConfigError("frontend.sample_rate must be positive");
    if (hop <= 0) throw ConfigError("frontend.hop must be positive");
    if (n_pitch_bins <= 0) throw ConfigError("frontend.n_pitch_bins must be positive");
    if (harmonics.empty()) throw ConfigError("frontend.harmonics must not be empty");
    for (int h : harmonics)
        if (h < 1) throw ConfigError("frontend.harmonics must all be >= 1");
    if (!(power_floor > 0)) throw ConfigError("frontend.power_floor must be positive");
    if (!(max_kernel_seconds > 0)) throw ConfigError("frontend.max_kernel_seconds must be positive");
}

CqtPlan CqtPlan::design(int sample_rate, double fmin, int bins_per_octave, int n_bins, int hop,
                        double max_kernel_seconds) {
    if (sample_rate <= 0) throw std::invalid_argument("sample_rate must be positive");
    if (!(fmin > 0)) throw std::invalid_argument("fmin must be positive");
    if (fmin >= sample_rate / 2.0) throw std::invalid_argument("fmin must be below Nyquist");
    if (bins_per_octave <= 0 || bins_per_octave % 12 != 0)
        throw std::invalid_argument("bins_per_octave must be a positive multiple of 12, got " +
                                    std::to_string(bins_per_octave));
    if (n_bins <= 0) throw std::invalid_argument("n_bins must be positive");
    if (hop <= 0) throw std::invalid_argument("hop must be positive");

    CqtPlan plan;
    plan.sample_rate_ = sample_rate;
    plan.fmin_ = fmin;
    plan.bins_per_octave_ = bins_per_octave;
    plan.hop_ = hop;
    plan.q_scale_ = 1.0 / (std::exp2(1.0 / bins_per_octave) - 1.0);
    const auto cap = static_cast<std::size_t>(std::ceil(max_kernel_seconds * sample_rate));
    const double nyquist = sample_rate / 2.0;

    plan.kernels_.resize(n_bins);
    for (int k = 0; k < n_bins; ++k) {
        const double f = plan.center_freq(k);
        if (f > nyquist) continue;
        std::size_t len =
            static_cast<std::size_t>(std::ceil(plan.q_scale_ * sample_rate / f));
        len = std::clamp<std::size_t>(len, 1, cap);
        Kernel& ker = plan.kernels_[k];
        ker.re.resize(len);
        ker.im.resize(len);
        // Periodic Hann, centred at len/2, L1-normalised.
        double wsum = 0.0;
        std::vector<double> win(len);
        for (std::size_t n = 0; n < len; ++n) {
            win[n] = len == 1 ? 1.0
                              : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                                     static_cast<double>(len));
            wsum += win[n];
        }
        const auto half = static_cast<std::int64_t>(len / 2);
        for (std::size_t n = 0; n < len; ++n) {
            const double t = static_cast<double>(static_cast<std::int64_t>(n) - half) / sample_rate;
            const double phase = -2.0 * std::numbers::pi * f * t;
            ker.re[n] = win[n] / wsum * std::cos(phase);
            ker.im[n] = win[n] / wsum * std::sin(phase);
        }
        plan.max_kernel_len_ = std::max(plan.max_kernel_len_, len);
        plan.left_reach_ = std::max(plan.left_reach_, len / 2);
        plan.right_reach_ = std::max(plan.right_reach_, len - len / 2 - 1);
    }
    return plan;
}

CqtPlan CqtPlan::design(const FrontendConfig& cfg) {
    cfg.validate();
    return design(cfg.sample_rate, cfg.fmin, cfg.bins_per_octave, cfg.n_bins(), cfg.hop,
                  cfg.max_kernel_seconds);
}

double CqtPlan::center_freq(int k) const {
    return fmin_ * std::exp2(static_cast<double>(k) / bins_per_octave_);
}

CqtStream::CqtStream(const CqtPlan& plan) : plan_(&plan) { reset(); }

void CqtStream::reset() {
    // Pre-fill the left reach with zeros so frame 0 sees silence before the start.
    buf_.assign(plan_->left_reach(), 0.0);
    buf_start_ = -static_cast<std::int64_t>(plan_->left_reach());
    received_ = 0;
    next_frame_ = 0;
    finished_ = false;
}

std::vector<double> CqtStream::frame_at(std::int64_t centre) const {
    const int n_bins = plan_->n_bins();
    std::vector<double> out(n_bins, 0.0);
    for (int k = 0; k < n_bins; ++k) {
        const auto& ker = plan_->kernel(k);
        const std::size_t len = ker.size();
        if (len == 0) continue;
        const std::int64_t first = centre - static_cast<std::int64_t>(len / 2);
        const double* x = buf_.data() + (first - buf_start_);
        const double* kr = ker.re.data();
        const double* ki = ker.im.data();
        double re = 0.0, im = 0.0;
        for (std::size_t n = 0; n < len; ++n) {
            re += kr[n] * x[n];
            im += ki[n] * x[n];
        }
        out[k] = std::sqrt(re * re + im * im);
    }
    return out;
}

void CqtStream::compact() {
    const std::int64_t keep_from =
        static_cast<std::int64_t>(next_frame_) * plan_->hop() - static_cast<std::int64_t>(plan_->left_reach());
    const std::int64_t drop = keep_from - buf_start_;
    if (drop > 0 && static_cast<std::size_t>(drop) > buf_.size() / 2) {
        buf_.erase(buf_.begin(), buf_.begin() + drop);
        buf_start_ = keep_from;
    }
}

std::vector<std::vector<double>> CqtStream::push(std::span<const double> chunk) {
    if (finished_) throw std::logic_error("CqtStream::push after finish");
    buf_.insert(buf_.end(), chunk.begin(), chunk.end());
    received_ += static_cast<std::int64_t>(chunk.size());
    std::vector<std::vector<double>> frames;
    const auto reach = static_cast<std::int64_t>(plan_->right_reach());
    for (;;) {
        const std::int64_t centre = static_cast<std::int64_t>(next_frame_) * plan_->hop();
        if (centre + reach >= received_) break;
        frames.push_back(frame_at(centre));
        ++next_frame_;
    }
    compact();
    return frames;
}

std::vector<std::vector<double>> CqtStream::finish() {
    if (finished_) return {};
    const std::int64_t total = received_;
    std::vector<std::vector<double>> frames;
    const auto reach = static_cast<std::int64_t>(plan_->right_reach());
    for (;;) {
        const std::int64_t centre = static_cast<std::int64_t>(next_frame_) * plan_->hop();
        if (centre >= total) break;
        const std::int64_t need_end = centre + reach + 1;
        const std::int64_t have_end = buf_start_ + static_cast<std::int64_t>(buf_.size());
        if (need_end > have_end) buf_.resize(buf_.size() + (need_end - have_end), 0.0);
        frames.push_back(frame_at(centre));
        ++next_frame_;
    }
    finished_ = true;
    return frames;
}

std::vector<std::vector<double>> cqt_magnitudes(const CqtPlan& plan, std::span<const double> samples) {
    CqtStream stream(plan);
    auto frames = stream.push(samples);
    auto tail = stream.finish();
    frames.insert(frames.end(), std::make_move_iterator(tail.begin()), std::make_move_iterator(tail.end()));
    return frames;
}

double log_power(double magnitude, double power_floor) {
    return std::log(std::max(magnitude * magnitude, power_floor));
}

std::vector<double> log_power(std::span<const double> magnitudes, double power_floor) {
    std::vector<double> out(magnitudes.size());
    for (std::size_t i = 0; i < magnitudes.size(); ++i) {
        if (magnitudes[i] < 0) throw std::invalid_argument("log_power: negative magnitude");
        out[i] = log_power(magnitudes[i], power_floor);
    }
    return out;
}

FeatureMap stack_harmonics(std::span<const double> log_frame, const CqtPlan& plan,
                           std::span<const int> harmonics, int n_pitch_bins, double log_floor) {
    FeatureMap out(harmonics.size(), static_cast<std::size_t>(n_pitch_bins), log_floor);
    const int n = static_cast<int>(log_frame.size());
    for (std::size_t j = 0; j < harmonics.size(); ++j) {
        const int shift = harmonic_shift(harmonics[j], plan.bins_per_octave());
        for (int k = 0; k < n_pitch_bins; ++k) {
            const int src = k + shift;
            if (src >= n || src >= plan.n_bins() || plan.above_nyquist(src)) continue;
            out.at(j, k) = std::max(log_frame[src], log_floor);
        }
    }
    return out;
}

namespace {

int decimation_factor(const FrontendConfig& cfg, int input_rate) {
    if (input_rate <= 0 || input_rate % cfg.sample_rate != 0)
        throw FormatError("input sample rate " + std::to_string(input_rate) +
                          " Hz is not an integer multiple of " + std::to_string(cfg.sample_rate) + " Hz");
    return input_rate / cfg.sample_rate;
}

}  // namespace

Frontend::Frontend(const FrontendConfig& cfg, int input_rate)
    : cfg_(cfg),
      plan_(CqtPlan::design(cfg)),
      decimator_(decimation_factor(cfg, input_rate)),
      stream_(plan_) {}

std::vector<FeatureMap> Frontend::stack(std::vector<std::vector<double>> mags) const {
    std::vector<FeatureMap> out;
    out.reserve(mags.size());
    const double floor = cfg_.log_floor();
    for (auto& m : mags) {
        auto lp = log_power(m, cfg_.power_floor);
        out.push_back(stack_harmonics(lp, plan_, cfg_.harmonics, cfg_.n_pitch_bins, floor));
    }
    return out;
}

std::vector<FeatureMap> Frontend::push(std::span<const double> chunk) {
    if (decimator_.factor() == 1) return stack(stream_.push(chunk));
    auto dec = decimator_.push(chunk);
    return stack(stream_.push(dec));
}

std::vector<FeatureMap> Frontend::finish() { return stack(stream_.finish()); }

HarmonicSpectrogram compute_spectrogram(const FrontendConfig& cfg, const AudioBuffer& audio) {
    Frontend fe(cfg, audio.sample_rate);
    HarmonicSpectrogram spec;
    spec.frame_rate = cfg.frame_rate();
    spec.harmonics = cfg.harmonics;
    spec.frames = fe.push(audio.samples);
    auto tail = fe.finish();
    spec.frames.insert(spec.frames.end(), std::make_move_iterator(tail.begin()),
                       std::make_move_iterator(tail.end()));
    return spec;
}

}  // namespace crnn
