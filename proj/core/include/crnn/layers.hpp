#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "crnn/tensor.hpp"

/// Differentiable per-frame layer kernels. Every backward function
/// accumulates (+=) into the gradient outputs it is given; pass nullptr for
/// a gradient that is not needed.
namespace crnn::layers {

// ---------------------------------------------------------------------------
// Frequency convolution: kernel [out, in, k_f] (k_f odd), bias [out] or empty.
// Zero ("same") padding, stride 1.

FeatureMap conv_freq(const FeatureMap& x, const Tensor& kernel, const Tensor& bias);
void conv_freq_backward(const FeatureMap& x, const Tensor& kernel, const FeatureMap& dy,
                        FeatureMap* dx, Tensor* dkernel, Tensor* dbias);

// ---------------------------------------------------------------------------
// Average pooling along frequency with stride == width.

FeatureMap avg_pool_freq(const FeatureMap& x, int width);
FeatureMap avg_pool_freq_backward(const FeatureMap& dy, int width);

// ---------------------------------------------------------------------------
// Layer normalisation over every (channel, bin) element of one frame, with a
// per-channel affine map.

inline constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
    std::vector<double> xhat;
    double inv_std = 0.0;
};

FeatureMap layer_norm_frame(const FeatureMap& x, const Tensor& gain, const Tensor& bias,
                            double eps = kLayerNormEps, LayerNormCache* cache = nullptr);
void layer_norm_frame_backward(const FeatureMap& dy, const LayerNormCache& cache, const Tensor& gain,
                               FeatureMap* dx, Tensor* dgain, Tensor* dbias);

// ---------------------------------------------------------------------------
// Pointwise nonlinearities.

inline constexpr double kSeluLambda = 1.0507009873554805;
inline constexpr double kSeluAlpha = 1.6732632423543772;

double selu(double x);
double selu_grad(double x);
double sigmoid(double x);

/// amplitude * tanh(slope * x)
struct ScaledTanh {
    double amplitude = 1.7159;
    double slope = 2.0 / 3.0;

    double operator()(double x) const;
    double grad(double x) const;
    friend bool operator==(const ScaledTanh&, const ScaledTanh&) = default;
};

void selu_inplace(FeatureMap& x);
/// dy *= selu'(pre), elementwise.
void selu_backward_inplace(const FeatureMap& pre, FeatureMap& dy);

// ---------------------------------------------------------------------------
// Nearest-neighbour repetition along time.

std::vector<FeatureMap> upsample_time(std::span<const FeatureMap> frames, int factor);
std::vector<FeatureMap> upsample_time_backward(std::span<const FeatureMap> dframes, int factor);

// ---------------------------------------------------------------------------
// Causal temporal convolution. window holds k_t frames ordered oldest to
// current; kernel [out, in, k_t] where tap k_t-1 multiplies the current frame.

FeatureMap causal_conv_time(std::span<const FeatureMap> window, const Tensor& kernel, const Tensor& bias);
void causal_conv_time_backward(std::span<const FeatureMap> window, const Tensor& kernel,
                               const FeatureMap& dy, std::span<FeatureMap> dwindow, Tensor* dkernel,
                               Tensor* dbias);

// ---------------------------------------------------------------------------
// 1x1 convolution followed by the logistic function.

FeatureMap pointwise_head(const FeatureMap& x, const Tensor& kernel, const Tensor& bias);
/// y is the forward output; dy the gradient w.r.t. y.
void pointwise_head_backward(const FeatureMap& x, const FeatureMap& y, const Tensor& kernel,
                             const FeatureMap& dy, FeatureMap* dx, Tensor* dkernel, Tensor* dbias);

// ---------------------------------------------------------------------------
// Convolutional LSTM with peepholes, uncoupled forget gate and per-branch
// layer normalisation of the input and recurrent pre-activations.

enum Gate : int { kInput = 0, kForget = 1, kCell = 2, kOutput = 3 };

struct ConvLstmShape {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t bins = 0;
    std::size_t kernel = 3;
    bool layer_norm = true;
    double ln_eps = kLayerNormEps;
    ScaledTanh tanh{};
};

struct ConvLstmParams {
    std::array<Tensor, 4> wx;       // [out, in, k] per gate
    std::array<Tensor, 4> wh;       // [out, out, k] per gate
    std::array<Tensor, 3> peephole; // [out, bins] for input, forget, output gates
    std::array<Tensor, 4> bias;     // [out] per gate
    std::array<Tensor, 8> ln_gain;  // [out]; index 2*gate for x branch, 2*gate+1 for h branch
    std::array<Tensor, 8> ln_bias;

    /// Zero weights, unit layer-norm gains.
    static ConvLstmParams zeros(const ConvLstmShape& shape);

    friend bool operator==(const ConvLstmParams&, const ConvLstmParams&) = default;

    template <class F>
    void for_each(F&& f) {
        static constexpr const char* g = "ifgo";
        for (int q = 0; q < 4; ++q) f(std::string("wx_") + g[q], wx[q]);
        for (int q = 0; q < 4; ++q) f(std::string("wh_") + g[q], wh[q]);
        static constexpr const char* pg = "ifo";
        for (int q = 0; q < 3; ++q) f(std::string("peep_") + pg[q], peephole[q]);
        for (int q = 0; q < 4; ++q) f(std::string("b_") + g[q], bias[q]);
        for (int q = 0; q < 8; ++q)
            f(std::string("ln_gain_") + g[q / 2] + (q % 2 ? "h" : "x"), ln_gain[q]);
        for (int q = 0; q < 8; ++q)
            f(std::string("ln_bias_") + g[q / 2] + (q % 2 ? "h" : "x"), ln_bias[q]);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<ConvLstmParams*>(this)->for_each(
            [&](const std::string& name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
    }
};

struct ConvLstmState {
    FeatureMap h;
    FeatureMap c;

    static ConvLstmState zeros(const ConvLstmShape& shape) {
        return {FeatureMap(shape.out_channels, shape.bins), FeatureMap(shape.out_channels, shape.bins)};
    }
    friend bool operator==(const ConvLstmState&, const ConvLstmState&) = default;
};

struct ConvLstmCache {
    FeatureMap x, h_prev, c_prev;
    std::array<LayerNormCache, 8> ln;
    std::array<FeatureMap, 4> gate;  // post-activation i, f, g, o
    FeatureMap g_pre;                // pre-activation of the cell candidate
    FeatureMap c;                    // new cell state
};

ConvLstmState convlstm_step(const FeatureMap& x, const ConvLstmState& state, const ConvLstmParams& p,
                            const ConvLstmShape& shape, ConvLstmCache* cache = nullptr);

struct ConvLstmStepGrad {
    FeatureMap dx;
    ConvLstmState dstate;  // gradient w.r.t. the incoming (h, c)
};

/// dh/dc are gradients w.r.t. the step's outputs h' and c'.
ConvLstmStepGrad convlstm_step_backward(const ConvLstmCache& cache, const FeatureMap& dh,
                                        const FeatureMap& dc, const ConvLstmParams& p,
                                        const ConvLstmShape& shape, ConvLstmParams& grads);

}  // namespace crnn::layers
