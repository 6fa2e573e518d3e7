#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "crnn/network.hpp"
#include "crnn/pianoroll.hpp"

namespace crnn {

struct TrainerConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t segment_length = 128;  // input frames per lane per step
    std::size_t lanes = 4;
    double clip_norm = 5.0;  // global gradient norm; <= 0 disables
    double pos_weight_art = 4.0;
    double pred_clamp = 1e-7;
    std::size_t steps = 0;   // > 0: exactly this many steps, cycling the data
    std::size_t epochs = 1;  // passes over the data when steps == 0
    std::size_t checkpoint_every = 0;
    int threads = 0;  // lane parallelism; 0 = CRNN_PITCH_THREADS or hardware

    void validate() const;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LossResult {
    double loss = 0.0;
    std::vector<FeatureMap> grad;  // d loss / d prediction, same shapes as pred
};

/// Mean binary cross-entropy over every cell; articulation (channel 0)
/// positives are weighted by pos_weight_art. Predictions are clamped to
/// [clamp, 1 - clamp] inside the logarithms.
LossResult bce_loss(std::span<const FeatureMap> pred, std::span<const FeatureMap> target, double pos_weight_art,
                    double clamp = 1e-7);
LossResult bce_loss(const PianoRoll& pred, const PianoRoll& target, double pos_weight_art, double clamp = 1e-7);

struct AdamState {
    Parameters m, v;
    std::uint64_t t = 0;
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    static AdamState for_parameters(const Parameters& p, const TrainerConfig& cfg);
};

/// One bias-corrected Adam update. Throws TrainingError, leaving p and a
/// untouched, if any gradient is not finite. Parameters stay float-representable.
void adam_step(Parameters& p, const Gradients& g, AdamState& a);

double global_norm(const Gradients& g);

/// One labelled clip: network input frames and per-output-frame targets
/// ([2 x pitches], channel 0 articulation, channel 1 sustain).
struct TrainingClip {
    std::string id;
    std::vector<FeatureMap> inputs;
    std::vector<FeatureMap> targets;
};

/// Converts a ground-truth roll into per-frame target maps.
std::vector<FeatureMap> targets_from_roll(const PianoRoll& roll);

struct TrainHooks {
    std::function<void(std::size_t step, std::size_t lane, std::size_t clip, std::size_t cursor, const StreamState&)>
        on_segment_begin;
    std::function<void(std::size_t step, std::size_t lane, std::size_t clip, std::size_t cursor, const StreamState&)>
        on_segment_end;
    std::function<void(std::size_t step, const Gradients&)> on_gradients;
    std::function<void(std::size_t step, double loss)> on_step;
    std::function<void(std::size_t step, const Parameters&)> on_checkpoint;
};

struct TrainResult {
    Parameters params;
    std::vector<double> loss_curve;  // one entry per optimizer step
};

/// Truncated BPTT over `lanes` parallel streams: each step every active lane
/// advances segment_length frames from its carried state, gradients are
/// averaged over lanes (fixed order) and one Adam step is applied. A lane's
/// state is reset whenever it is handed a new clip. Deterministic in seed.
TrainResult train(std::span<const TrainingClip> clips, const NetworkConfig& net, const TrainerConfig& cfg,
                  std::uint64_t seed, const TrainHooks& hooks = {});
/// As above, continuing from given parameters.
TrainResult train(std::span<const TrainingClip> clips, const NetworkConfig& net, const TrainerConfig& cfg,
                  std::uint64_t seed, Parameters initial, const TrainHooks& hooks = {});

/// Threads to use when cfg.threads == 0: CRNN_PITCH_THREADS if set and > 0,
/// otherwise the hardware concurrency.
int resolve_threads(int requested);

}  // namespace crnn
