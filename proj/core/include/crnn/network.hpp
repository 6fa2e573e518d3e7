#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crnn/layers.hpp"
#include "crnn/tensor.hpp"

namespace crnn {

struct ConvSpec {
    std::size_t channels = 0;
    std::size_t kernel = 1;
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Architecture of the transcription network. The frequency axis is pooled
/// once (pool_width) between the convolution stack and the recurrent stack.
struct NetworkConfig {
    std::size_t n_pitch_bins_in = 264;
    std::size_t n_harmonics = 4;
    std::vector<ConvSpec> conv_stack{{16, 5}, {32, 5}};
    int pool_width = 3;
    std::vector<ConvSpec> convlstm_stack{{48, 3}, {48, 3}};
    int upsample_factor = 2;
    ConvSpec time_conv{48, 3};
    bool layer_norm = true;
    double ln_eps = layers::kLayerNormEps;
    layers::ScaledTanh tanh{};
    /// Fixed input map x -> (x + input_offset) * input_scale; the defaults send
    /// the log-power floor to 0 and unit power to 1.
    double input_offset = 23.025850929940457;
    double input_scale = 1.0 / 23.025850929940457;

    std::size_t n_pitches_out() const { return n_pitch_bins_in / static_cast<std::size_t>(pool_width); }
    /// Throws ConfigError on inconsistent shapes.
    void validate() const;
    /// Canonical `network.key = value` lines; equal configs give equal text.
    std::string to_text() const;
    std::uint32_t digest() const;

    /// Smallest configuration that still exercises every layer at the default
    /// input size.
    static NetworkConfig tiny();

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct ConvParams {
    Tensor kernel;  // [out, in, k]
    Tensor bias;    // [out]
    friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

/// Every learned tensor of the network, enumerable in a stable order.
/// Skip projections are empty tensors where the identity suffices.
struct Parameters {
    std::vector<ConvParams> conv;
    Tensor pool_skip;  // [c_pool, n_harmonics, 1]
    std::vector<layers::ConvLstmParams> lstm;
    std::vector<Tensor> lstm_skip;  // [out, in, 1]
    ConvParams time_conv;           // kernel [out, in, k_t]
    Tensor up_skip;                 // [out, in, 1]
    ConvParams head;                // kernel [2, in, 1]

    /// All-zero tensors shaped for cfg (layer-norm gains included).
    static Parameters zeros(const NetworkConfig& cfg);
    Parameters zeros_like() const;

    template <class F>
    void for_each(F&& f) {
        for (std::size_t l = 0; l < conv.size(); ++l) {
            f("conv" + std::to_string(l) + ".kernel", conv[l].kernel);
            f("conv" + std::to_string(l) + ".bias", conv[l].bias);
        }
        if (pool_skip.size()) f(std::string("pool.skip"), pool_skip);
        for (std::size_t l = 0; l < lstm.size(); ++l) {
            const std::string prefix = "lstm" + std::to_string(l) + ".";
            lstm[l].for_each([&](const std::string& n, Tensor& t) { f(prefix + n, t); });
            if (lstm_skip[l].size()) f(prefix + "skip", lstm_skip[l]);
        }
        f(std::string("time.kernel"), time_conv.kernel);
        f(std::string("time.bias"), time_conv.bias);
        if (up_skip.size()) f(std::string("up.skip"), up_skip);
        f(std::string("head.kernel"), head.kernel);
        f(std::string("head.bias"), head.bias);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<Parameters*>(this)->for_each(
            [&](const std::string& n, Tensor& t) { f(n, static_cast<const Tensor&>(t)); });
    }

    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    std::size_t count() const;
    bool all_finite() const;
    /// Rounds every value to the nearest float so the f32 file format is lossless.
    void round_to_float();

    friend bool operator==(const Parameters&, const Parameters&) = default;
};

/// Gradients share the parameter layout.
using Gradients = Parameters;

std::size_t parameter_count(const NetworkConfig& cfg);

/// Orthogonal weights (each tensor viewed as out x rest), zero biases except
/// forget-gate bias 1, unit layer-norm gains. Deterministic in seed.
Parameters init_parameters(const NetworkConfig& cfg, std::uint64_t seed);

/// Recurrent carry of one stream.
struct StreamState {
    std::vector<layers::ConvLstmState> lstm;
    std::vector<FeatureMap> time_history;  // last k_t-1 upsampled frames, oldest first

    static StreamState zeros(const NetworkConfig& cfg);
    void reset();
    friend bool operator==(const StreamState&, const StreamState&) = default;
};

/// Activations of one segment, kept for the backward pass.
struct ForwardCache {
    struct InputFrame {
        FeatureMap x0;
        std::vector<FeatureMap> conv_pre;
        std::vector<FeatureMap> conv_out;
        FeatureMap pooled_input;
        std::vector<FeatureMap> lstm_in;
        std::vector<layers::ConvLstmCache> lstm;
        FeatureMap top;  // recurrent stack output
    };
    struct OutputFrame {
        FeatureMap time_pre;
        FeatureMap block_out;
        FeatureMap out;
    };
    std::vector<InputFrame> in;
    std::vector<OutputFrame> out;
    std::vector<FeatureMap> history;  // time_history at segment start
};

/// Per-frame features -> per-output-frame [2 x pitches] activations
/// (channel 0 articulation, channel 1 sustain).
class Network {
public:
    explicit Network(NetworkConfig cfg);

    const NetworkConfig& config() const { return cfg_; }

    /// Runs frames through the network, advancing state by frames.size()
    /// recurrent steps. Returns frames.size() * upsample_factor outputs.
    std::vector<FeatureMap> forward(const Parameters& p, StreamState& state, std::span<const FeatureMap> frames,
                                    ForwardCache* cache = nullptr) const;

    /// Reverse-mode pass over a cached segment. dout holds the loss gradient
    /// for each output frame; parameter gradients accumulate into grads. The
    /// return value is the gradient w.r.t. the segment's incoming state.
    StreamState backward(const Parameters& p, const ForwardCache& cache, std::span<const FeatureMap> dout,
                         Gradients& grads) const;

private:
    layers::ConvLstmShape lstm_shape(std::size_t l) const;

    NetworkConfig cfg_;
};

/// Model file: "CRNP", u16 version, u32 config length, config text, u32 network
/// config digest, u32 tensor count, tensors (u32 name length, name, u32 ndim,
/// u32 dims, f32 payload), trailing CRC32. All integers little-endian.
std::vector<std::uint8_t> save_parameters(const Parameters& p, const NetworkConfig& cfg,
                                          std::string_view config_text = {});
/// Throws FormatError on a corrupt or truncated file and ConfigError when the
/// stored tensors or digest do not match cfg.
Parameters load_parameters(std::span<const std::uint8_t> bytes, const NetworkConfig& cfg);
/// Returns the config text stored in the file (validates the checksum).
std::string read_model_config_text(std::span<const std::uint8_t> bytes);

}  // namespace crnn
