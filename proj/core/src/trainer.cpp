#include "crnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <optional>
#include <thread>
#include <utility>

#include "crnn/error.hpp"
#include "crnn/random.hpp"

namespace crnn {

void TrainerConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("trainer config: " + m); };
    if (!(lr > 0)) fail("lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0, 1)");
    if (!(eps > 0)) fail("eps must be positive");
    if (segment_length == 0) fail("segment_length must be >= 1");
    if (lanes == 0) fail("lanes must be >= 1");
    if (!(pos_weight_art > 0)) fail("pos_weight_art must be positive");
    if (!(pred_clamp > 0 && pred_clamp < 0.5)) fail("pred_clamp must lie in (0, 0.5)");
    if (steps == 0 && epochs == 0) fail("either steps or epochs must be set");
}

LossResult bce_loss(std::span<const FeatureMap> pred, std::span<const FeatureMap> target, double pos_weight_art,
                    double clamp) {
    if (pred.size() != target.size()) throw ShapeError("bce_loss: prediction and target frame counts differ");
    std::size_t cells = 0;
    for (std::size_t t = 0; t < pred.size(); ++t) {
        if (!pred[t].same_shape(target[t]) || pred[t].channels != 2)
            throw ShapeError("bce_loss: frame shapes differ or are not 2-channel");
        cells += pred[t].size();
    }
    LossResult res;
    res.grad.reserve(pred.size());
    if (cells == 0) return res;
    const double inv_n = 1.0 / static_cast<double>(cells);
    for (std::size_t t = 0; t < pred.size(); ++t) {
        const FeatureMap& p = pred[t];
        const FeatureMap& y = target[t];
        FeatureMap g(p.channels, p.bins);
        for (std::size_t c = 0; c < 2; ++c)
            for (std::size_t f = 0; f < p.bins; ++f) {
                const std::size_t i = c * p.bins + f;
                const double raw = p.values[i];
                const double q = std::clamp(raw, clamp, 1.0 - clamp);
                const double yt = y.values[i];
                const double w = (c == 0 && yt > 0) ? pos_weight_art : 1.0;
                res.loss -= w * yt * std::log(q) + (1.0 - yt) * std::log1p(-q);
                const bool inside = raw > clamp && raw < 1.0 - clamp;
                g.values[i] = inside ? inv_n * (-w * yt / q + (1.0 - yt) / (1.0 - q)) : 0.0;
            }
        res.grad.push_back(std::move(g));
    }
    res.loss *= inv_n;
    return res;
}

LossResult bce_loss(const PianoRoll& pred, const PianoRoll& target, double pos_weight_art, double clamp) {
    const auto p = targets_from_roll(pred);
    const auto y = targets_from_roll(target);
    return bce_loss(p, y, pos_weight_art, clamp);
}

std::vector<FeatureMap> targets_from_roll(const PianoRoll& roll) {
    std::vector<FeatureMap> out(roll.n_frames, FeatureMap(2, roll.n_pitches));
    for (std::size_t r = 0; r < roll.n_pitches; ++r)
        for (std::size_t t = 0; t < roll.n_frames; ++t) {
            out[t].at(0, r) = roll.art(r, t);
            out[t].at(1, r) = roll.sus(r, t);
        }
    return out;
}

AdamState AdamState::for_parameters(const Parameters& p, const TrainerConfig& cfg) {
    AdamState a;
    a.m = p.zeros_like();
    a.v = p.zeros_like();
    a.lr = cfg.lr;
    a.beta1 = cfg.beta1;
    a.beta2 = cfg.beta2;
    a.eps = cfg.eps;
    return a;
}

void adam_step(Parameters& p, const Gradients& g, AdamState& a) {
    auto pt = p.tensors();
    const auto gt = g.tensors();
    auto mt = a.m.tensors();
    auto vt = a.v.tensors();
    if (gt.size() != pt.size() || mt.size() != pt.size() || vt.size() != pt.size())
        throw ShapeError("adam_step: parameter, gradient and moment layouts differ");
    for (std::size_t i = 0; i < pt.size(); ++i) {
        if (!gt[i]->same_shape(*pt[i]) || !mt[i]->same_shape(*pt[i]) || !vt[i]->same_shape(*pt[i]))
            throw ShapeError("adam_step: tensor " + std::to_string(i) + " shape mismatch");
        if (!all_finite(gt[i]->data))
            throw TrainingError("non-finite gradient in tensor " + std::to_string(i) + "; step refused");
    }
    a.t += 1;
    const double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(a.t));
    const double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(a.t));
    for (std::size_t i = 0; i < pt.size(); ++i) {
        auto& pd = pt[i]->data;
        const auto& gd = gt[i]->data;
        auto& md = mt[i]->data;
        auto& vd = vt[i]->data;
        for (std::size_t j = 0; j < pd.size(); ++j) {
            md[j] = a.beta1 * md[j] + (1.0 - a.beta1) * gd[j];
            vd[j] = a.beta2 * vd[j] + (1.0 - a.beta2) * gd[j] * gd[j];
            const double mhat = md[j] / bc1;
            const double vhat = vd[j] / bc2;
            pd[j] = static_cast<double>(static_cast<float>(pd[j] - a.lr * mhat / (std::sqrt(vhat) + a.eps)));
        }
    }
}

double global_norm(const Gradients& g) {
    double s = 0.0;
    g.for_each([&](const std::string&, const Tensor& t) {
        for (double v : t.data) s += v * v;
    });
    return std::sqrt(s);
}

int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("CRNN_PITCH_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

namespace {

struct Lane {
    std::optional<std::size_t> clip;
    std::size_t cursor = 0;
    StreamState state;
    // Per-step scratch.
    bool active = false;
    std::size_t seg_begin = 0;
    double loss = 0.0;
    Gradients grads;
    ForwardCache cache;
};

template <class F>
void for_lanes(std::size_t n, int threads, F&& fn) {
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t t = std::min<std::size_t>(n, static_cast<std::size_t>(threads));
    for (std::size_t w = 0; w < t; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += t) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

TrainResult train(std::span<const TrainingClip> clips, const NetworkConfig& net, const TrainerConfig& cfg,
                  std::uint64_t seed, const TrainHooks& hooks) {
    return train(clips, net, cfg, seed, init_parameters(net, Rng::derive(seed, 0)), hooks);
}

TrainResult train(std::span<const TrainingClip> clips, const NetworkConfig& net, const TrainerConfig& cfg,
                  std::uint64_t seed, Parameters initial, const TrainHooks& hooks) {
    cfg.validate();
    if (clips.empty()) throw TrainingError("empty dataset");
    const auto factor = static_cast<std::size_t>(net.upsample_factor);
    for (const auto& c : clips) {
        if (c.inputs.empty()) throw TrainingError("clip '" + c.id + "' is shorter than one frame");
        if (c.targets.size() != c.inputs.size() * factor)
            throw TrainingError("clip '" + c.id + "' has " + std::to_string(c.targets.size()) + " target frames, expected " +
                                std::to_string(c.inputs.size() * factor));
    }
    const Network network(net);
    TrainResult result;
    result.params = std::move(initial);
    AdamState adam = AdamState::for_parameters(result.params, cfg);
    const int threads = resolve_threads(cfg.threads);

    std::deque<std::size_t> queue;
    std::size_t epochs_queued = 0;
    auto refill = [&] {
        if (cfg.steps == 0 && epochs_queued >= cfg.epochs) return false;
        std::vector<std::size_t> order(clips.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(Rng::derive(seed, 1000 + epochs_queued));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
        queue.insert(queue.end(), order.begin(), order.end());
        ++epochs_queued;
        return true;
    };

    std::vector<Lane> lanes(cfg.lanes);
    for (auto& l : lanes) {
        l.state = StreamState::zeros(net);
        l.grads = result.params.zeros_like();
    }
    Gradients total = result.params.zeros_like();

    for (std::size_t step = 0; cfg.steps == 0 || step < cfg.steps; ++step) {
        std::size_t n_active = 0;
        for (auto& l : lanes) {
            if (!l.clip) {
                if (queue.empty()) refill();
                if (!queue.empty()) {
                    l.clip = queue.front();
                    queue.pop_front();
                    l.cursor = 0;
                    l.state.reset();
                }
            }
            l.active = l.clip.has_value();
            n_active += l.active;
        }
        if (n_active == 0) break;

        for (std::size_t i = 0; i < lanes.size(); ++i) {
            auto& l = lanes[i];
            if (l.active && hooks.on_segment_begin) hooks.on_segment_begin(step, i, *l.clip, l.cursor, l.state);
        }
        for_lanes(lanes.size(), threads, [&](std::size_t i) {
            Lane& l = lanes[i];
            if (!l.active) return;
            const TrainingClip& clip = clips[*l.clip];
            const std::size_t end = std::min(l.cursor + cfg.segment_length, clip.inputs.size());
            auto in = std::span(clip.inputs).subspan(l.cursor, end - l.cursor);
            auto tgt = std::span(clip.targets).subspan(l.cursor * factor, (end - l.cursor) * factor);
            auto out = network.forward(result.params, l.state, in, &l.cache);
            auto lr = bce_loss(out, tgt, cfg.pos_weight_art, cfg.pred_clamp);
            l.grads.for_each([](const std::string&, Tensor& t) { t.zero(); });
            network.backward(result.params, l.cache, lr.grad, l.grads);  // incoming-state gradient dropped
            l.loss = lr.loss;
            l.seg_begin = l.cursor;
            l.cursor = end;
        });

        total.for_each([](const std::string&, Tensor& t) { t.zero(); });
        double loss = 0.0;
        auto tt = total.tensors();
        for (std::size_t i = 0; i < lanes.size(); ++i) {
            auto& l = lanes[i];
            if (!l.active) continue;
            loss += l.loss;
            const auto lt = std::as_const(l.grads).tensors();
            for (std::size_t k = 0; k < tt.size(); ++k)
                for (std::size_t j = 0; j < tt[k]->size(); ++j) tt[k]->data[j] += lt[k]->data[j];
            if (hooks.on_segment_end) hooks.on_segment_end(step, i, *l.clip, l.seg_begin, l.state);
            if (l.cursor >= clips[*l.clip].inputs.size()) l.clip.reset();
        }
        loss /= static_cast<double>(n_active);
        const double inv = 1.0 / static_cast<double>(n_active);
        for (auto* t : tt)
            for (double& v : t->data) v *= inv;
        if (cfg.clip_norm > 0) {
            const double norm = global_norm(total);
            if (norm > cfg.clip_norm) {
                const double s = cfg.clip_norm / norm;
                for (auto* t : tt)
                    for (double& v : t->data) v *= s;
            }
        }
        if (hooks.on_gradients) hooks.on_gradients(step, total);
        if (!std::isfinite(loss)) throw TrainingError("non-finite loss at step " + std::to_string(step));
        adam_step(result.params, total, adam);
        result.loss_curve.push_back(loss);
        if (hooks.on_step) hooks.on_step(step, loss);
        if (cfg.checkpoint_every && (step + 1) % cfg.checkpoint_every == 0 && hooks.on_checkpoint)
            hooks.on_checkpoint(step + 1, result.params);
    }
    return result;
}

}  // namespace crnn
