#include "crnn/network.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>

#include "crnn/error.hpp"
#include "crnn/io_util.hpp"
#include "crnn/random.hpp"

namespace crnn {

using layers::ConvLstmParams;
using layers::ConvLstmShape;
using layers::ConvLstmState;

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_specs(const std::vector<ConvSpec>& specs) {
    std::string s;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(specs[i].channels) + ":" + std::to_string(specs[i].kernel);
    }
    return s;
}

std::size_t top_channels(const NetworkConfig& cfg) {
    if (!cfg.convlstm_stack.empty()) return cfg.convlstm_stack.back().channels;
    if (!cfg.conv_stack.empty()) return cfg.conv_stack.back().channels;
    return cfg.n_harmonics;
}

std::size_t pool_channels(const NetworkConfig& cfg) {
    return cfg.conv_stack.empty() ? cfg.n_harmonics : cfg.conv_stack.back().channels;
}

Tensor projection(std::size_t out, std::size_t in) {
    return out == in ? Tensor{} : Tensor({out, in, 1});
}

FeatureMap apply_skip(const Tensor& proj, const FeatureMap& x) {
    return proj.size() ? layers::conv_freq(x, proj, Tensor{}) : x;
}

void skip_backward(const Tensor& proj, const FeatureMap& x, const FeatureMap& dy, FeatureMap* dx, Tensor* dproj) {
    if (proj.size()) {
        layers::conv_freq_backward(x, proj, dy, dx, dproj, nullptr);
    } else if (dx) {
        *dx += dy;
    }
}

}  // namespace

void NetworkConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("network config: " + m); };
    if (n_pitch_bins_in == 0 || n_harmonics == 0) fail("input shape must be non-empty");
    if (pool_width < 1) fail("pool_width must be >= 1");
    if (n_pitch_bins_in % static_cast<std::size_t>(pool_width) != 0)
        fail("pool_width " + std::to_string(pool_width) + " does not divide " + std::to_string(n_pitch_bins_in) +
             " input bins");
    if (upsample_factor < 1) fail("upsample_factor must be >= 1");
    for (const auto& c : conv_stack)
        if (c.channels == 0 || c.kernel % 2 == 0) fail("conv_stack entries need channels > 0 and odd kernels");
    for (const auto& c : convlstm_stack)
        if (c.channels == 0 || c.kernel % 2 == 0) fail("convlstm_stack entries need channels > 0 and odd kernels");
    if (time_conv.channels == 0 || time_conv.kernel == 0) fail("time_conv needs channels > 0 and k_t >= 1");
    if (!(ln_eps > 0)) fail("ln_eps must be positive");
}

std::string NetworkConfig::to_text() const {
    std::string s;
    auto kv = [&](const char* k, const std::string& v) { s += std::string("network.") + k + " = " + v + "\n"; };
    kv("n_pitch_bins_in", std::to_string(n_pitch_bins_in));
    kv("n_harmonics", std::to_string(n_harmonics));
    kv("conv_stack", fmt_specs(conv_stack));
    kv("pool_width", std::to_string(pool_width));
    kv("convlstm_stack", fmt_specs(convlstm_stack));
    kv("upsample_factor", std::to_string(upsample_factor));
    kv("time_conv", fmt_specs({time_conv}));
    kv("layer_norm", layer_norm ? "true" : "false");
    kv("ln_eps", fmt_double(ln_eps));
    kv("tanh_amplitude", fmt_double(tanh.amplitude));
    kv("tanh_slope", fmt_double(tanh.slope));
    kv("input_offset", fmt_double(input_offset));
    kv("input_scale", fmt_double(input_scale));
    return s;
}

std::uint32_t NetworkConfig::digest() const {
    const std::string t = to_text();
    return crc32(std::span(reinterpret_cast<const std::uint8_t*>(t.data()), t.size()));
}

NetworkConfig NetworkConfig::tiny() {
    NetworkConfig c;
    c.conv_stack = {{4, 5}, {8, 5}};
    c.convlstm_stack = {{8, 3}};
    c.time_conv = {8, 3};
    return c;
}

// ---------------------------------------------------------------------------

Parameters Parameters::zeros(const NetworkConfig& cfg) {
    cfg.validate();
    Parameters p;
    std::size_t ch = cfg.n_harmonics;
    for (const auto& c : cfg.conv_stack) {
        p.conv.push_back({Tensor({c.channels, ch, c.kernel}), Tensor({c.channels})});
        ch = c.channels;
    }
    p.pool_skip = projection(ch, cfg.n_harmonics);
    const std::size_t bins = cfg.n_pitches_out();
    for (const auto& c : cfg.convlstm_stack) {
        ConvLstmShape s{ch, c.channels, bins, c.kernel, cfg.layer_norm, cfg.ln_eps, cfg.tanh};
        p.lstm.push_back(ConvLstmParams::zeros(s));
        for (auto& g : p.lstm.back().ln_gain) g.zero();
        p.lstm_skip.push_back(projection(c.channels, ch));
        ch = c.channels;
    }
    p.time_conv = {Tensor({cfg.time_conv.channels, ch, cfg.time_conv.kernel}), Tensor({cfg.time_conv.channels})};
    p.up_skip = projection(cfg.time_conv.channels, ch);
    p.head = {Tensor({2, cfg.time_conv.channels, 1}), Tensor({2})};
    return p;
}

Parameters Parameters::zeros_like() const {
    Parameters z = *this;
    z.for_each([](const std::string&, Tensor& t) { t.zero(); });
    return z;
}

std::vector<Tensor*> Parameters::tensors() {
    std::vector<Tensor*> out;
    for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

std::vector<const Tensor*> Parameters::tensors() const {
    std::vector<const Tensor*> out;
    for_each([&](const std::string&, const Tensor& t) { out.push_back(&t); });
    return out;
}

std::size_t Parameters::count() const {
    std::size_t n = 0;
    for_each([&](const std::string&, const Tensor& t) { n += t.size(); });
    return n;
}

bool Parameters::all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, const Tensor& t) { ok = ok && crnn::all_finite(t.data); });
    return ok;
}

void Parameters::round_to_float() {
    for_each([](const std::string&, Tensor& t) {
        for (double& v : t.data) v = static_cast<double>(static_cast<float>(v));
    });
}

std::size_t parameter_count(const NetworkConfig& cfg) { return Parameters::zeros(cfg).count(); }

namespace {

void fill_orthogonal(Tensor& t, Rng& rng) {
    if (t.size() == 0) throw ConfigError("cannot initialise a tensor with a zero dimension");
    const auto rows = static_cast<Eigen::Index>(t.dim(0));
    const auto cols = static_cast<Eigen::Index>(t.size() / t.dim(0));
    const bool wide = rows <= cols;
    const Eigen::Index m = wide ? cols : rows, n = wide ? rows : cols;
    Eigen::MatrixXd a(m, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < m; ++i) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
    const Eigen::MatrixXd r = qr.matrixQR();
    for (Eigen::Index j = 0; j < n; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    // q is m x n with orthonormal columns; the tensor is rows x cols.
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            t[static_cast<std::size_t>(i * cols + j)] = wide ? q(j, i) : q(i, j);
}

}  // namespace

Parameters init_parameters(const NetworkConfig& cfg, std::uint64_t seed) {
    Parameters p = Parameters::zeros(cfg);
    Rng rng(seed);
    for (auto& c : p.conv) fill_orthogonal(c.kernel, rng);
    if (p.pool_skip.size()) fill_orthogonal(p.pool_skip, rng);
    for (std::size_t l = 0; l < p.lstm.size(); ++l) {
        auto& q = p.lstm[l];
        for (auto& w : q.wx) fill_orthogonal(w, rng);
        for (auto& w : q.wh) fill_orthogonal(w, rng);
        for (auto& w : q.peephole) fill_orthogonal(w, rng);
        for (auto& g : q.ln_gain) std::fill(g.data.begin(), g.data.end(), 1.0);
        std::fill(q.bias[layers::kForget].data.begin(), q.bias[layers::kForget].data.end(), 1.0);
        if (p.lstm_skip[l].size()) fill_orthogonal(p.lstm_skip[l], rng);
    }
    fill_orthogonal(p.time_conv.kernel, rng);
    if (p.up_skip.size()) fill_orthogonal(p.up_skip, rng);
    fill_orthogonal(p.head.kernel, rng);
    p.round_to_float();
    return p;
}

// ---------------------------------------------------------------------------

StreamState StreamState::zeros(const NetworkConfig& cfg) {
    StreamState s;
    const std::size_t bins = cfg.n_pitches_out();
    for (const auto& c : cfg.convlstm_stack)
        s.lstm.push_back({FeatureMap(c.channels, bins), FeatureMap(c.channels, bins)});
    const std::size_t ch = top_channels(cfg);
    s.time_history.assign(cfg.time_conv.kernel - 1, FeatureMap(ch, bins));
    return s;
}

void StreamState::reset() {
    for (auto& l : lstm) {
        l.h.zero();
        l.c.zero();
    }
    for (auto& f : time_history) f.zero();
}

Network::Network(NetworkConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

layers::ConvLstmShape Network::lstm_shape(std::size_t l) const {
    const std::size_t in = l == 0 ? pool_channels(cfg_) : cfg_.convlstm_stack[l - 1].channels;
    const auto& c = cfg_.convlstm_stack[l];
    return {in, c.channels, cfg_.n_pitches_out(), c.kernel, cfg_.layer_norm, cfg_.ln_eps, cfg_.tanh};
}

std::vector<FeatureMap> Network::forward(const Parameters& p, StreamState& state, std::span<const FeatureMap> frames,
                                         ForwardCache* cache) const {
    const std::size_t L = cfg_.convlstm_stack.size();
    const std::size_t kt = cfg_.time_conv.kernel;
    if (state.lstm.size() != L || state.time_history.size() != kt - 1)
        throw ShapeError("stream state does not match the network config");
    if (cache) {
        cache->in.clear();
        cache->out.clear();
        cache->history = state.time_history;
    }
    std::vector<FeatureMap> outputs;
    outputs.reserve(frames.size() * cfg_.upsample_factor);

    for (const FeatureMap& frame : frames) {
        if (frame.channels != cfg_.n_harmonics || frame.bins != cfg_.n_pitch_bins_in)
            throw ShapeError("input frame is " + std::to_string(frame.channels) + "x" + std::to_string(frame.bins) +
                             ", network expects " + std::to_string(cfg_.n_harmonics) + "x" +
                             std::to_string(cfg_.n_pitch_bins_in));
        ForwardCache::InputFrame fc;
        FeatureMap x0 = frame;
        for (double& v : x0.values) v = (v + cfg_.input_offset) * cfg_.input_scale;

        const FeatureMap* h = &x0;
        FeatureMap cur;
        for (std::size_t l = 0; l < p.conv.size(); ++l) {
            FeatureMap pre = layers::conv_freq(*h, p.conv[l].kernel, p.conv[l].bias);
            cur = pre;
            layers::selu_inplace(cur);
            if (cache) {
                fc.conv_pre.push_back(std::move(pre));
                fc.conv_out.push_back(cur);
            }
            h = &cur;
        }
        FeatureMap u = layers::avg_pool_freq(*h, cfg_.pool_width);
        FeatureMap pooled_in = layers::avg_pool_freq(x0, cfg_.pool_width);
        u += apply_skip(p.pool_skip, pooled_in);

        for (std::size_t l = 0; l < L; ++l) {
            const auto shape = lstm_shape(l);
            layers::ConvLstmCache lc;
            state.lstm[l] = layers::convlstm_step(u, state.lstm[l], p.lstm[l], shape, cache ? &lc : nullptr);
            FeatureMap next = apply_skip(p.lstm_skip[l], u);
            next += state.lstm[l].h;
            if (cache) {
                fc.lstm_in.push_back(std::move(u));
                fc.lstm.push_back(std::move(lc));
            }
            u = std::move(next);
        }

        for (int r = 0; r < cfg_.upsample_factor; ++r) {
            std::vector<FeatureMap> window;
            window.reserve(kt);
            for (const auto& hf : state.time_history) window.push_back(hf);
            window.push_back(u);
            FeatureMap pre = layers::causal_conv_time(window, p.time_conv.kernel, p.time_conv.bias);
            FeatureMap block = pre;
            layers::selu_inplace(block);
            block += apply_skip(p.up_skip, u);
            FeatureMap out = layers::pointwise_head(block, p.head.kernel, p.head.bias);
            if (kt > 1) {
                state.time_history.erase(state.time_history.begin());
                state.time_history.push_back(u);
            }
            if (cache) cache->out.push_back({std::move(pre), std::move(block), out});
            outputs.push_back(std::move(out));
        }
        if (cache) {
            fc.x0 = std::move(x0);
            fc.pooled_input = std::move(pooled_in);
            fc.top = std::move(u);
            cache->in.push_back(std::move(fc));
        }
    }
    return outputs;
}

StreamState Network::backward(const Parameters& p, const ForwardCache& cache, std::span<const FeatureMap> dout,
                              Gradients& grads) const {
    const std::size_t T = cache.in.size();
    const auto R = static_cast<std::size_t>(cfg_.upsample_factor);
    const std::size_t kt = cfg_.time_conv.kernel;
    const std::size_t L = cfg_.convlstm_stack.size();
    if (dout.size() != T * R || cache.out.size() != T * R)
        throw ShapeError("backward: output gradient count does not match the cached segment");

    // Extended sequence of time-conv inputs: carried history then upsampled frames.
    std::vector<FeatureMap> ext = cache.history;
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t r = 0; r < R; ++r) ext.push_back(cache.in[t].top);
    std::vector<FeatureMap> dext;
    dext.reserve(ext.size());
    for (const auto& e : ext) dext.emplace_back(e.channels, e.bins);

    for (std::size_t n = 0; n < T * R; ++n) {
        const auto& oc = cache.out[n];
        const FeatureMap& v = ext[kt - 1 + n];
        FeatureMap dblock(oc.block_out.channels, oc.block_out.bins);
        layers::pointwise_head_backward(oc.block_out, oc.out, p.head.kernel, dout[n], &dblock, &grads.head.kernel,
                                        &grads.head.bias);
        skip_backward(p.up_skip, v, dblock, &dext[kt - 1 + n], &grads.up_skip);
        layers::selu_backward_inplace(oc.time_pre, dblock);
        layers::causal_conv_time_backward(std::span(ext).subspan(n, kt), p.time_conv.kernel, dblock,
                                          std::span(dext).subspan(n, kt), &grads.time_conv.kernel,
                                          &grads.time_conv.bias);
    }

    StreamState dstate;
    dstate.time_history.assign(dext.begin(), dext.begin() + static_cast<std::ptrdiff_t>(kt - 1));

    std::vector<FeatureMap> du(T);
    for (std::size_t t = 0; t < T; ++t) {
        du[t] = dext[kt - 1 + t * R];
        for (std::size_t r = 1; r < R; ++r) du[t] += dext[kt - 1 + t * R + r];
    }

    dstate.lstm.resize(L);
    for (std::size_t li = L; li-- > 0;) {
        const auto shape = lstm_shape(li);
        std::vector<FeatureMap> du_in(T, FeatureMap(shape.in_channels, shape.bins));
        for (std::size_t t = 0; t < T; ++t)
            skip_backward(p.lstm_skip[li], cache.in[t].lstm_in[li], du[t], &du_in[t], &grads.lstm_skip[li]);
        FeatureMap dh(shape.out_channels, shape.bins), dc(shape.out_channels, shape.bins);
        for (std::size_t t = T; t-- > 0;) {
            dh += du[t];
            auto g = layers::convlstm_step_backward(cache.in[t].lstm[li], dh, dc, p.lstm[li], shape, grads.lstm[li]);
            du_in[t] += g.dx;
            dh = std::move(g.dstate.h);
            dc = std::move(g.dstate.c);
        }
        dstate.lstm[li] = {std::move(dh), std::move(dc)};
        du = std::move(du_in);
    }

    for (std::size_t t = 0; t < T; ++t) {
        const auto& fc = cache.in[t];
        skip_backward(p.pool_skip, fc.pooled_input, du[t], nullptr, &grads.pool_skip);
        if (p.conv.empty()) continue;
        FeatureMap dh = layers::avg_pool_freq_backward(du[t], cfg_.pool_width);
        for (std::size_t l = p.conv.size(); l-- > 0;) {
            layers::selu_backward_inplace(fc.conv_pre[l], dh);
            const FeatureMap& input = l == 0 ? fc.x0 : fc.conv_out[l - 1];
            if (l == 0) {
                layers::conv_freq_backward(input, p.conv[l].kernel, dh, nullptr, &grads.conv[l].kernel,
                                           &grads.conv[l].bias);
            } else {
                FeatureMap dx(input.channels, input.bins);
                layers::conv_freq_backward(input, p.conv[l].kernel, dh, &dx, &grads.conv[l].kernel,
                                           &grads.conv[l].bias);
                dh = std::move(dx);
            }
        }
    }
    return dstate;
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::uint16_t kModelVersion = 1;

}  // namespace

std::vector<std::uint8_t> save_parameters(const Parameters& p, const NetworkConfig& cfg,
                                          std::string_view config_text) {
    ByteWriter w;
    w.bytes("CRNP");
    w.u16le(kModelVersion);
    w.u32le(static_cast<std::uint32_t>(config_text.size()));
    w.bytes(config_text);
    w.u32le(cfg.digest());
    std::uint32_t n = 0;
    p.for_each([&](const std::string&, const Tensor&) { ++n; });
    w.u32le(n);
    p.for_each([&](const std::string& name, const Tensor& t) {
        w.u32le(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.u32le(static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) w.u32le(static_cast<std::uint32_t>(d));
        for (double v : t.data) w.f32le(static_cast<float>(v));
    });
    const std::uint32_t crc = crc32(w.view());
    w.u32le(crc);
    return std::move(w).take();
}

namespace {

/// Validates magic and checksum; returns a reader positioned after the version.
ByteReader open_model(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 + 2 + 4 + 4 + 4 + 4) throw FormatError("model file truncated (" + std::to_string(bytes.size()) + " bytes)");
    if (std::string(bytes.begin(), bytes.begin() + 4) != "CRNP") throw FormatError("not a model file (bad magic)");
    const auto body = bytes.first(bytes.size() - 4);
    ByteReader tail(bytes.last(4), "model checksum");
    if (tail.u32le() != crc32(body)) throw FormatError("model file checksum mismatch (corrupt or truncated)");
    ByteReader r(body, "model file");
    r.skip(4);
    const auto version = r.u16le();
    if (version != kModelVersion) throw FormatError("unsupported model file version " + std::to_string(version));
    return r;
}

}  // namespace

std::string read_model_config_text(std::span<const std::uint8_t> bytes) {
    ByteReader r = open_model(bytes);
    const auto len = r.u32le();
    return r.string(len);
}

Parameters load_parameters(std::span<const std::uint8_t> bytes, const NetworkConfig& cfg) {
    ByteReader r = open_model(bytes);
    r.skip(r.u32le());
    const std::uint32_t digest = r.u32le();
    const std::uint32_t n = r.u32le();

    Parameters p = Parameters::zeros(cfg);
    std::vector<std::pair<std::string, Tensor*>> expected;
    p.for_each([&](const std::string& name, Tensor& t) { expected.emplace_back(name, &t); });

    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string name = r.string(r.u32le());
        const auto ndim = r.u32le();
        if (ndim > 8) throw FormatError("tensor '" + name + "' has implausible rank " + std::to_string(ndim));
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = r.u32le();
        if (i >= expected.size())
            throw ConfigError("model file has unexpected extra tensor '" + name + "'");
        auto& [ename, et] = expected[i];
        if (name != ename)
            throw ConfigError("model tensor " + std::to_string(i) + " is '" + name + "', config expects '" + ename + "'");
        if (shape != et->shape)
            throw ConfigError("shape mismatch for tensor '" + name + "': file has " + shape_string(shape) +
                              ", config expects " + shape_string(et->shape));
        for (double& v : et->data) v = static_cast<double>(r.f32le());
    }
    if (n != expected.size())
        throw ConfigError("model file has " + std::to_string(n) + " tensors, config expects " +
                          std::to_string(expected.size()) + " (first missing: '" + expected[n].first + "')");
    if (!r.done()) throw FormatError("model file has trailing bytes before the checksum");
    if (digest != cfg.digest()) throw ConfigError("model config digest does not match the network config");
    return p;
}

}  // namespace crnn
