#include "crnn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "crnn/error.hpp"

namespace crnn::layers {

namespace {

void check(bool ok, const char* what) {
    if (!ok) throw ShapeError(what);
}

/// y[o][f] += sum_{i,d} w[o][i][d] * x[i][f + d - k/2]
void conv_accumulate(const double* x, std::size_t in_ch, std::size_t bins, const double* w,
                     std::size_t out_ch, std::size_t k, double* y) {
    const auto half = static_cast<std::ptrdiff_t>(k / 2);
    const auto nb = static_cast<std::ptrdiff_t>(bins);
    for (std::size_t o = 0; o < out_ch; ++o) {
        double* yo = y + o * bins;
        for (std::size_t i = 0; i < in_ch; ++i) {
            const double* xi = x + i * bins;
            const double* wo = w + (o * in_ch + i) * k;
            for (std::size_t d = 0; d < k; ++d) {
                const double wv = wo[d];
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(d) - half;
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s);
                const std::ptrdiff_t hi = std::min(nb, nb - s);
                for (std::ptrdiff_t f = lo; f < hi; ++f) yo[f] += wv * xi[f + s];
            }
        }
    }
}

/// Adjoint of conv_accumulate with respect to x and w.
void conv_accumulate_backward(const double* x, std::size_t in_ch, std::size_t bins, const double* w,
                              std::size_t out_ch, std::size_t k, const double* dy, double* dx,
                              double* dw) {
    const auto half = static_cast<std::ptrdiff_t>(k / 2);
    const auto nb = static_cast<std::ptrdiff_t>(bins);
    for (std::size_t o = 0; o < out_ch; ++o) {
        const double* dyo = dy + o * bins;
        for (std::size_t i = 0; i < in_ch; ++i) {
            const double* xi = x + i * bins;
            double* dxi = dx ? dx + i * bins : nullptr;
            const double* wo = w + (o * in_ch + i) * k;
            double* dwo = dw ? dw + (o * in_ch + i) * k : nullptr;
            for (std::size_t d = 0; d < k; ++d) {
                const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(d) - half;
                const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -s);
                const std::ptrdiff_t hi = std::min(nb, nb - s);
                if (dxi) {
                    const double wv = wo[d];
                    for (std::ptrdiff_t f = lo; f < hi; ++f) dxi[f + s] += wv * dyo[f];
                }
                if (dwo) {
                    double acc = 0.0;
                    for (std::ptrdiff_t f = lo; f < hi; ++f) acc += dyo[f] * xi[f + s];
                    dwo[d] += acc;
                }
            }
        }
    }
}

void check_conv(const FeatureMap& x, const Tensor& kernel, const Tensor& bias) {
    check(kernel.shape.size() == 3, "conv kernel must be [out, in, k]");
    check(kernel.dim(1) == x.channels, "conv kernel input channels do not match the feature map");
    check(kernel.dim(2) % 2 == 1, "conv kernel width must be odd");
    check(bias.size() == 0 || (bias.shape.size() == 1 && bias.dim(0) == kernel.dim(0)),
          "conv bias must be [out] or empty");
}

}  // namespace

FeatureMap conv_freq(const FeatureMap& x, const Tensor& kernel, const Tensor& bias) {
    check_conv(x, kernel, bias);
    const std::size_t out_ch = kernel.dim(0);
    FeatureMap y(out_ch, x.bins);
    if (bias.size())
        for (std::size_t o = 0; o < out_ch; ++o) std::fill_n(y.values.data() + o * x.bins, x.bins, bias[o]);
    conv_accumulate(x.values.data(), x.channels, x.bins, kernel.ptr(), out_ch, kernel.dim(2), y.values.data());
    return y;
}

void conv_freq_backward(const FeatureMap& x, const Tensor& kernel, const FeatureMap& dy, FeatureMap* dx,
                        Tensor* dkernel, Tensor* dbias) {
    check(dy.channels == kernel.dim(0) && dy.bins == x.bins, "conv_freq_backward: dy shape mismatch");
    if (dx) check(dx->same_shape(x), "conv_freq_backward: dx shape mismatch");
    conv_accumulate_backward(x.values.data(), x.channels, x.bins, kernel.ptr(), kernel.dim(0), kernel.dim(2),
                             dy.values.data(), dx ? dx->values.data() : nullptr,
                             dkernel ? dkernel->ptr() : nullptr);
    if (dbias && dbias->size()) {
        for (std::size_t o = 0; o < dy.channels; ++o) {
            double acc = 0.0;
            for (double v : dy.channel(o)) acc += v;
            (*dbias)[o] += acc;
        }
    }
}

FeatureMap avg_pool_freq(const FeatureMap& x, int width) {
    check(width >= 1, "pool width must be >= 1");
    const auto w = static_cast<std::size_t>(width);
    check(x.bins % w == 0, "frequency bins must be divisible by the pool width");
    FeatureMap y(x.channels, x.bins / w);
    const double inv = 1.0 / width;
    for (std::size_t c = 0; c < x.channels; ++c)
        for (std::size_t b = 0; b < y.bins; ++b) {
            double acc = 0.0;
            for (std::size_t j = 0; j < w; ++j) acc += x.at(c, b * w + j);
            y.at(c, b) = acc * inv;
        }
    return y;
}

FeatureMap avg_pool_freq_backward(const FeatureMap& dy, int width) {
    check(width >= 1, "pool width must be >= 1");
    const auto w = static_cast<std::size_t>(width);
    FeatureMap dx(dy.channels, dy.bins * w);
    const double inv = 1.0 / width;
    for (std::size_t c = 0; c < dy.channels; ++c)
        for (std::size_t b = 0; b < dy.bins; ++b)
            for (std::size_t j = 0; j < w; ++j) dx.at(c, b * w + j) = dy.at(c, b) * inv;
    return dx;
}

FeatureMap layer_norm_frame(const FeatureMap& x, const Tensor& gain, const Tensor& bias, double eps,
                            LayerNormCache* cache) {
    check(gain.size() == x.channels && bias.size() == x.channels, "layer norm affine must be [channels]");
    const std::size_t n = x.size();
    double mean = 0.0;
    for (double v : x.values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x.values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double inv_std = 1.0 / std::sqrt(var + eps);

    FeatureMap y(x.channels, x.bins);
    if (cache) {
        cache->xhat.resize(n);
        cache->inv_std = inv_std;
    }
    for (std::size_t c = 0; c < x.channels; ++c) {
        const double g = gain[c], b = bias[c];
        for (std::size_t f = 0; f < x.bins; ++f) {
            const std::size_t idx = c * x.bins + f;
            const double xh = (x.values[idx] - mean) * inv_std;
            if (cache) cache->xhat[idx] = xh;
            y.values[idx] = g * xh + b;
        }
    }
    return y;
}

void layer_norm_frame_backward(const FeatureMap& dy, const LayerNormCache& cache, const Tensor& gain,
                               FeatureMap* dx, Tensor* dgain, Tensor* dbias) {
    const std::size_t n = dy.size();
    check(cache.xhat.size() == n, "layer_norm_frame_backward: cache shape mismatch");
    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
    for (std::size_t c = 0; c < dy.channels; ++c) {
        double sg = 0.0, sb = 0.0;
        for (std::size_t f = 0; f < dy.bins; ++f) {
            const std::size_t idx = c * dy.bins + f;
            const double d = dy.values[idx];
            const double dxh = d * gain[c];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * cache.xhat[idx];
            sg += d * cache.xhat[idx];
            sb += d;
        }
        if (dgain) (*dgain)[c] += sg;
        if (dbias) (*dbias)[c] += sb;
    }
    if (!dx) return;
    mean_dxh /= static_cast<double>(n);
    mean_dxh_xh /= static_cast<double>(n);
    for (std::size_t c = 0; c < dy.channels; ++c)
        for (std::size_t f = 0; f < dy.bins; ++f) {
            const std::size_t idx = c * dy.bins + f;
            const double dxh = dy.values[idx] * gain[c];
            dx->values[idx] += cache.inv_std * (dxh - mean_dxh - cache.xhat[idx] * mean_dxh_xh);
        }
}

double selu(double x) { return x > 0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * std::expm1(x); }
double selu_grad(double x) { return x > 0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double ScaledTanh::operator()(double x) const { return amplitude * std::tanh(slope * x); }
double ScaledTanh::grad(double x) const {
    const double t = std::tanh(slope * x);
    return amplitude * slope * (1.0 - t * t);
}

void selu_inplace(FeatureMap& x) {
    for (double& v : x.values) v = selu(v);
}

void selu_backward_inplace(const FeatureMap& pre, FeatureMap& dy) {
    check(pre.same_shape(dy), "selu backward shape mismatch");
    for (std::size_t i = 0; i < dy.size(); ++i) dy.values[i] *= selu_grad(pre.values[i]);
}

std::vector<FeatureMap> upsample_time(std::span<const FeatureMap> frames, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
    std::vector<FeatureMap> out;
    out.reserve(frames.size() * factor);
    for (const auto& f : frames)
        for (int r = 0; r < factor; ++r) out.push_back(f);
    return out;
}

std::vector<FeatureMap> upsample_time_backward(std::span<const FeatureMap> dframes, int factor) {
    if (factor < 1) throw std::invalid_argument("upsample factor must be >= 1");
    check(dframes.size() % factor == 0, "upsample backward: frame count not a multiple of the factor");
    std::vector<FeatureMap> out;
    out.reserve(dframes.size() / factor);
    for (std::size_t t = 0; t < dframes.size(); t += factor) {
        FeatureMap acc = dframes[t];
        for (int r = 1; r < factor; ++r) acc += dframes[t + r];
        out.push_back(std::move(acc));
    }
    return out;
}

FeatureMap causal_conv_time(std::span<const FeatureMap> window, const Tensor& kernel, const Tensor& bias) {
    check(kernel.shape.size() == 3, "time conv kernel must be [out, in, k_t]");
    const std::size_t out_ch = kernel.dim(0), in_ch = kernel.dim(1), kt = kernel.dim(2);
    check(window.size() == kt, "time conv window length must equal k_t");
    check(bias.size() == 0 || bias.size() == out_ch, "time conv bias must be [out] or empty");
    const std::size_t bins = window.front().bins;
    for (const auto& w : window) check(w.channels == in_ch && w.bins == bins, "time conv window shape mismatch");
    FeatureMap y(out_ch, bins);
    for (std::size_t o = 0; o < out_ch; ++o) {
        double* yo = y.values.data() + o * bins;
        if (bias.size()) std::fill_n(yo, bins, bias[o]);
        for (std::size_t i = 0; i < in_ch; ++i)
            for (std::size_t j = 0; j < kt; ++j) {
                const double wv = kernel[(o * in_ch + i) * kt + j];
                const double* xi = window[j].values.data() + i * bins;
                for (std::size_t f = 0; f < bins; ++f) yo[f] += wv * xi[f];
            }
    }
    return y;
}

void causal_conv_time_backward(std::span<const FeatureMap> window, const Tensor& kernel, const FeatureMap& dy,
                               std::span<FeatureMap> dwindow, Tensor* dkernel, Tensor* dbias) {
    const std::size_t out_ch = kernel.dim(0), in_ch = kernel.dim(1), kt = kernel.dim(2);
    check(window.size() == kt, "time conv window length must equal k_t");
    check(dwindow.empty() || dwindow.size() == kt, "time conv dwindow length must equal k_t");
    const std::size_t bins = dy.bins;
    for (std::size_t o = 0; o < out_ch; ++o) {
        const double* dyo = dy.values.data() + o * bins;
        for (std::size_t i = 0; i < in_ch; ++i)
            for (std::size_t j = 0; j < kt; ++j) {
                const std::size_t widx = (o * in_ch + i) * kt + j;
                const double* xi = window[j].values.data() + i * bins;
                if (dkernel) {
                    double acc = 0.0;
                    for (std::size_t f = 0; f < bins; ++f) acc += dyo[f] * xi[f];
                    (*dkernel)[widx] += acc;
                }
                if (!dwindow.empty()) {
                    const double wv = kernel[widx];
                    double* dxi = dwindow[j].values.data() + i * bins;
                    for (std::size_t f = 0; f < bins; ++f) dxi[f] += wv * dyo[f];
                }
            }
        if (dbias && dbias->size()) {
            double acc = 0.0;
            for (std::size_t f = 0; f < bins; ++f) acc += dyo[f];
            (*dbias)[o] += acc;
        }
    }
}

FeatureMap pointwise_head(const FeatureMap& x, const Tensor& kernel, const Tensor& bias) {
    check(kernel.shape.size() == 3 && kernel.dim(0) == 2 && kernel.dim(2) == 1,
          "head kernel must be [2, in, 1] (articulation, sustain)");
    FeatureMap y = conv_freq(x, kernel, bias);
    for (double& v : y.values) v = sigmoid(v);
    return y;
}

void pointwise_head_backward(const FeatureMap& x, const FeatureMap& y, const Tensor& kernel,
                             const FeatureMap& dy, FeatureMap* dx, Tensor* dkernel, Tensor* dbias) {
    check(y.same_shape(dy), "head backward shape mismatch");
    FeatureMap dz = dy;
    for (std::size_t i = 0; i < dz.size(); ++i) dz.values[i] *= y.values[i] * (1.0 - y.values[i]);
    conv_freq_backward(x, kernel, dz, dx, dkernel, dbias);
}

// ---------------------------------------------------------------------------

ConvLstmParams ConvLstmParams::zeros(const ConvLstmShape& s) {
    ConvLstmParams p;
    for (int q = 0; q < 4; ++q) {
        p.wx[q] = Tensor({s.out_channels, s.in_channels, s.kernel});
        p.wh[q] = Tensor({s.out_channels, s.out_channels, s.kernel});
        p.bias[q] = Tensor({s.out_channels});
    }
    for (int q = 0; q < 3; ++q) p.peephole[q] = Tensor({s.out_channels, s.bins});
    for (int q = 0; q < 8; ++q) {
        p.ln_gain[q] = Tensor({s.out_channels}, 1.0);
        p.ln_bias[q] = Tensor({s.out_channels});
    }
    return p;
}

namespace {

void check_lstm(const FeatureMap& x, const ConvLstmState& st, const ConvLstmParams& p, const ConvLstmShape& s) {
    check(x.channels == s.in_channels && x.bins == s.bins, "convlstm input shape mismatch");
    check(st.h.channels == s.out_channels && st.h.bins == s.bins, "convlstm hidden state shape mismatch");
    check(st.c.same_shape(st.h), "convlstm cell state shape mismatch");
    for (int q = 0; q < 4; ++q) {
        check(p.wx[q].shape == std::vector<std::size_t>{s.out_channels, s.in_channels, s.kernel},
              "convlstm input kernel shape mismatch");
        check(p.wh[q].shape == std::vector<std::size_t>{s.out_channels, s.out_channels, s.kernel},
              "convlstm recurrent kernel shape mismatch");
        check(p.bias[q].size() == s.out_channels, "convlstm bias shape mismatch");
    }
    for (int q = 0; q < 3; ++q) check(p.peephole[q].size() == s.out_channels * s.bins, "convlstm peephole shape mismatch");
    check(s.kernel % 2 == 1, "convlstm kernel width must be odd");
}

}  // namespace

ConvLstmState convlstm_step(const FeatureMap& x, const ConvLstmState& state, const ConvLstmParams& p,
                            const ConvLstmShape& s, ConvLstmCache* cache) {
    check_lstm(x, state, p, s);
    const std::size_t C = s.out_channels, B = s.bins, N = C * B;
    std::array<FeatureMap, 4> z;
    for (int q = 0; q < 4; ++q) {
        FeatureMap ax(C, B), ah(C, B);
        conv_accumulate(x.values.data(), s.in_channels, B, p.wx[q].ptr(), C, s.kernel, ax.values.data());
        conv_accumulate(state.h.values.data(), C, B, p.wh[q].ptr(), C, s.kernel, ah.values.data());
        if (s.layer_norm) {
            z[q] = layer_norm_frame(ax, p.ln_gain[2 * q], p.ln_bias[2 * q], s.ln_eps, cache ? &cache->ln[2 * q] : nullptr);
            z[q] += layer_norm_frame(ah, p.ln_gain[2 * q + 1], p.ln_bias[2 * q + 1], s.ln_eps,
                                     cache ? &cache->ln[2 * q + 1] : nullptr);
        } else {
            z[q] = std::move(ax);
            z[q] += ah;
        }
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t f = 0; f < B; ++f) z[q].values[c * B + f] += p.bias[q][c];
    }

    ConvLstmState out{FeatureMap(C, B), FeatureMap(C, B)};
    FeatureMap gi(C, B), gf(C, B), gg(C, B), go(C, B);
    for (std::size_t n = 0; n < N; ++n) {
        const double c_prev = state.c.values[n];
        const double i = sigmoid(z[kInput].values[n] + p.peephole[0][n] * c_prev);
        const double f = sigmoid(z[kForget].values[n] + p.peephole[1][n] * c_prev);
        const double g = s.tanh(z[kCell].values[n]);
        const double c = f * c_prev + i * g;
        const double o = sigmoid(z[kOutput].values[n] + p.peephole[2][n] * c);
        out.c.values[n] = c;
        out.h.values[n] = o * s.tanh(c);
        gi.values[n] = i;
        gf.values[n] = f;
        gg.values[n] = g;
        go.values[n] = o;
    }
    if (cache) {
        cache->x = x;
        cache->h_prev = state.h;
        cache->c_prev = state.c;
        cache->g_pre = std::move(z[kCell]);
        cache->gate = {std::move(gi), std::move(gf), std::move(gg), std::move(go)};
        cache->c = out.c;
    }
    return out;
}

ConvLstmStepGrad convlstm_step_backward(const ConvLstmCache& cache, const FeatureMap& dh, const FeatureMap& dc_in,
                                        const ConvLstmParams& p, const ConvLstmShape& s, ConvLstmParams& grads) {
    const std::size_t C = s.out_channels, B = s.bins, N = C * B;
    check(dh.channels == C && dh.bins == B && dc_in.same_shape(dh), "convlstm backward gradient shape mismatch");
    const auto& gi = cache.gate[kInput].values;
    const auto& gf = cache.gate[kForget].values;
    const auto& gg = cache.gate[kCell].values;
    const auto& go = cache.gate[kOutput].values;

    std::array<FeatureMap, 4> dz{FeatureMap(C, B), FeatureMap(C, B), FeatureMap(C, B), FeatureMap(C, B)};
    ConvLstmStepGrad out{FeatureMap(s.in_channels, B), {FeatureMap(C, B), FeatureMap(C, B)}};
    for (std::size_t n = 0; n < N; ++n) {
        const double c = cache.c.values[n];
        const double c_prev = cache.c_prev.values[n];
        const double tc = s.tanh(c);
        const double d_o = dh.values[n] * tc;
        const double dzo = d_o * go[n] * (1.0 - go[n]);
        const double dcell = dc_in.values[n] + dh.values[n] * go[n] * s.tanh.grad(c) + dzo * p.peephole[2][n];
        grads.peephole[2][n] += dzo * c;
        const double dzi = dcell * gg[n] * gi[n] * (1.0 - gi[n]);
        const double dzf = dcell * c_prev * gf[n] * (1.0 - gf[n]);
        const double dzg = dcell * gi[n] * s.tanh.grad(cache.g_pre.values[n]);
        grads.peephole[0][n] += dzi * c_prev;
        grads.peephole[1][n] += dzf * c_prev;
        out.dstate.c.values[n] = dcell * gf[n] + dzi * p.peephole[0][n] + dzf * p.peephole[1][n];
        dz[kInput].values[n] = dzi;
        dz[kForget].values[n] = dzf;
        dz[kCell].values[n] = dzg;
        dz[kOutput].values[n] = dzo;
    }

    for (int q = 0; q < 4; ++q) {
        for (std::size_t c = 0; c < C; ++c) {
            double acc = 0.0;
            for (std::size_t f = 0; f < B; ++f) acc += dz[q].values[c * B + f];
            grads.bias[q][c] += acc;
        }
        const FeatureMap* dax = &dz[q];
        const FeatureMap* dah = &dz[q];
        FeatureMap bx, bh;
        if (s.layer_norm) {
            bx = FeatureMap(C, B);
            bh = FeatureMap(C, B);
            layer_norm_frame_backward(dz[q], cache.ln[2 * q], p.ln_gain[2 * q], &bx, &grads.ln_gain[2 * q],
                                      &grads.ln_bias[2 * q]);
            layer_norm_frame_backward(dz[q], cache.ln[2 * q + 1], p.ln_gain[2 * q + 1], &bh,
                                      &grads.ln_gain[2 * q + 1], &grads.ln_bias[2 * q + 1]);
            dax = &bx;
            dah = &bh;
        }
        conv_accumulate_backward(cache.x.values.data(), s.in_channels, B, p.wx[q].ptr(), C, s.kernel,
                                 dax->values.data(), out.dx.values.data(), grads.wx[q].ptr());
        conv_accumulate_backward(cache.h_prev.values.data(), C, B, p.wh[q].ptr(), C, s.kernel, dah->values.data(),
                                 out.dstate.h.values.data(), grads.wh[q].ptr());
    }
    return out;
}

}  // namespace crnn::layers
