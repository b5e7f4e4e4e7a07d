#pragma once

#include <functional>
#include <random>

#include "sp4d/dataset.hpp"
#include "sp4d/losses.hpp"

// Optimization loop: Adam with per-group learning rates, periodic
// densification/cloning/splitting/pruning, and validation metrics.

namespace sp4d {

struct TrainConfig {
    int iterations = 2000;
    double base_lr = 1.6e-3;
    // per-group multipliers on base_lr
    double lr_position = 1.0; // decays exponentially to lr_position_final x itself
    double lr_position_final = 0.01;
    double lr_rotor = 0.1;
    double lr_scales = 0.5;
    double lr_opacity = 5.0;
    double lr_sh = 0.05;
    double lr_phases = 0.05;
    int warmup = 0; // linear LR ramp over this many iterations (0 = off)

    int densify_interval = 100;
    double densify_grad_threshold = 2e-4; // pixel-gradient units
    double prune_opacity = 0.005;
    double split_scale_fraction = 0.01; // of scene extent
    double densify_until_fraction = 0.5;
    size_t max_gaussians = 200000;

    uint64_t seed = 0;
    int eval_interval = 500;
    int threads = 1;
    double time_cull_threshold = 1e-4;
    int sh_unlock_interval = 1000; // progressive SH degree unlock (0 = all on)
    int init_count = 2000;

    void validate() const;
};

struct OptimizerState {
    GradientBuffer m, v;
    int64_t step_count = 0;

    static OptimizerState zeros(const GaussianCloud& cloud) {
        return {GradientBuffer::zeros(cloud), GradientBuffer::zeros(cloud), 0};
    }
};

// One Adam update (beta 0.9/0.999, eps 1e-15, bias correction); rotor
// quaternions are renormalized afterwards. Throws on non-finite updates.
void adam_step(GaussianCloud& cloud, OptimizerState& state, const GradientBuffer& grads,
               const TrainConfig& cfg, int iteration);

// Clone/split high-gradient Gaussians, prune transparent ones, and keep the
// optimizer state rows in lockstep. Deterministic given the rng state.
void densify_and_prune(GaussianCloud& cloud, OptimizerState& state, const TrainConfig& cfg,
                       double scene_extent, std::mt19937_64& rng);

struct EvalResult {
    double psnr = 0, ssim = 0;
    std::vector<std::pair<double, double>> per_frame;
};

// Renders every frame at its pose/timestamp and scores PSNR/SSIM against the
// frame, tool pixels excluded. Rendered color is quantized to 8 bits first so
// scores match metrics recomputed from written PNGs.
EvalResult evaluate(const GaussianCloud& cloud, const SceneDataset& dataset, int threads = 1);

GaussianCloud initialize_cloud(const SceneDataset& train_set, const TrainConfig& cfg,
                               const AppearanceConfig& appearance, std::mt19937_64& rng);

struct MetricsRow {
    int iteration = 0;
    LossBreakdown loss;
    size_t gaussian_count = 0;
    bool has_eval = false;
    double psnr = 0, ssim = 0;
    double wall_ms = 0; // excluded from the deterministic metrics CSV
};

struct TrainResult {
    GaussianCloud cloud;
    std::vector<MetricsRow> log;
};

using CheckpointHook = std::function<void(const GaussianCloud&, int iteration)>;

TrainResult train(const SceneDataset& train_set, const SceneDataset& val_set,
                  const TrainConfig& cfg, const AppearanceConfig& appearance,
                  const LossWeights& weights, const CheckpointHook& on_checkpoint = {});

}  // namespace sp4d
