#include "sp4d/trainer.hpp"

#include <chrono>
#include <cmath>

#include "sp4d/metrics.hpp"
#include "sp4d/renderer.hpp"

namespace sp4d {

void TrainConfig::validate() const {
    if (iterations < 0) throw std::invalid_argument("train: iterations must be >= 0");
    if (!(base_lr > 0)) throw std::invalid_argument("train: base_lr must be positive");
    for (double v : {densify_grad_threshold, prune_opacity, split_scale_fraction})
        if (!(v > 0)) throw std::invalid_argument("train: thresholds must be positive");
    if (init_count < 1) throw std::invalid_argument("train: init_count must be >= 1");
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-15;

struct GroupLr {
    double mu, rotor, log_s, opacity, sh, phases;
};

GroupLr lr_at(const TrainConfig& cfg, int iteration) {
    double warm = 1.0;
    if (cfg.warmup > 0) warm = std::min(1.0, (iteration + 1.0) / cfg.warmup);
    const double progress =
        cfg.iterations > 1 ? static_cast<double>(iteration) / (cfg.iterations - 1) : 0.0;
    const double pos_decay = std::pow(cfg.lr_position_final, progress);
    GroupLr lr;
    lr.mu = cfg.base_lr * cfg.lr_position * pos_decay * warm;
    lr.rotor = cfg.base_lr * cfg.lr_rotor * warm;
    lr.log_s = cfg.base_lr * cfg.lr_scales * warm;
    lr.opacity = cfg.base_lr * cfg.lr_opacity * warm;
    lr.sh = cfg.base_lr * cfg.lr_sh * warm;
    lr.phases = cfg.base_lr * cfg.lr_phases * warm;
    return lr;
}

void adam_update(std::vector<double>& param, std::vector<double>& m, std::vector<double>& v,
                 const std::vector<double>& g, double lr, double bc1, double bc2) {
    for (size_t i = 0; i < param.size(); ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        param[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + kAdamEps);
    }
}

}  // namespace

void adam_step(GaussianCloud& cloud, OptimizerState& state, const GradientBuffer& grads,
               const TrainConfig& cfg, int iteration) {
    grads.check_finite();
    const size_t n = cloud.size();
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step_count));
    const GroupLr lr = lr_at(cfg, iteration);

    // gather parameters into group-major views, update, scatter back
    const int coeffs = grads.coeffs, bands = grads.bands;
    std::vector<double> p_mu(n * 4), p_rot(n * 8), p_ls(n * 4), p_op(n), p_sh(n * coeffs),
        p_ph(n * bands);
    for (size_t i = 0; i < n; ++i) {
        const Gaussian4D& g = cloud.gaussians[i];
        for (int c = 0; c < 4; ++c) {
            p_mu[i * 4 + c] = g.mu[c];
            p_rot[i * 8 + c] = g.rotor.q_left[c];
            p_rot[i * 8 + 4 + c] = g.rotor.q_right[c];
            p_ls[i * 4 + c] = g.scales.log_s[c];
        }
        p_op[i] = g.opacity_logit;
        for (int c = 0; c < coeffs; ++c) p_sh[i * coeffs + c] = g.sh.k[c];
        for (int c = 0; c < bands; ++c) p_ph[i * bands + c] = g.sh.phases[c];
    }

    adam_update(p_mu, state.m.mu, state.v.mu, grads.mu, lr.mu, bc1, bc2);
    adam_update(p_rot, state.m.rotor, state.v.rotor, grads.rotor, lr.rotor, bc1, bc2);
    adam_update(p_ls, state.m.log_s, state.v.log_s, grads.log_s, lr.log_s, bc1, bc2);
    adam_update(p_op, state.m.opacity, state.v.opacity, grads.opacity, lr.opacity, bc1, bc2);
    adam_update(p_sh, state.m.sh, state.v.sh, grads.sh, lr.sh, bc1, bc2);
    adam_update(p_ph, state.m.phases, state.v.phases, grads.phases, lr.phases, bc1, bc2);

    for (size_t i = 0; i < n; ++i) {
        Gaussian4D& g = cloud.gaussians[i];
        for (int c = 0; c < 4; ++c) {
            g.mu[c] = p_mu[i * 4 + c];
            g.rotor.q_left[c] = p_rot[i * 8 + c];
            g.rotor.q_right[c] = p_rot[i * 8 + 4 + c];
            g.scales.log_s[c] = p_ls[i * 4 + c];
        }
        g.opacity_logit = p_op[i];
        for (int c = 0; c < coeffs; ++c) g.sh.k[c] = p_sh[i * coeffs + c];
        for (int c = 0; c < bands; ++c) g.sh.phases[c] = p_ph[i * bands + c];

        g.rotor.q_left = g.rotor.q_left.normalized();
        g.rotor.q_right = g.rotor.q_right.normalized();
        for (int c = 0; c < 4; ++c)
            if (!std::isfinite(g.mu[c]) || !std::isfinite(g.scales.log_s[c]))
                throw std::runtime_error("step: non-finite update for gaussian " +
                                         std::to_string(i));
        if (!std::isfinite(g.opacity_logit))
            throw std::runtime_error("step: non-finite update for gaussian " + std::to_string(i));
    }
}

namespace {

// Rebuild a moment buffer under a row mapping (src < 0 means a fresh row).
GradientBuffer remap(const GradientBuffer& src, const std::vector<int64_t>& src_rows,
                     const GaussianCloud& new_cloud) {
    GradientBuffer out = GradientBuffer::zeros(new_cloud);
    auto copy_rows = [&](const std::vector<double>& from, std::vector<double>& to, int stride) {
        for (size_t i = 0; i < src_rows.size(); ++i) {
            if (src_rows[i] < 0) continue;
            const size_t s = static_cast<size_t>(src_rows[i]);
            for (int c = 0; c < stride; ++c) to[i * stride + c] = from[s * stride + c];
        }
    };
    copy_rows(src.mu, out.mu, 4);
    copy_rows(src.rotor, out.rotor, 8);
    copy_rows(src.log_s, out.log_s, 4);
    copy_rows(src.opacity, out.opacity, 1);
    copy_rows(src.sh, out.sh, out.coeffs);
    copy_rows(src.phases, out.phases, out.bands);
    return out;
}

}  // namespace

void densify_and_prune(GaussianCloud& cloud, OptimizerState& state, const TrainConfig& cfg,
                       double scene_extent, std::mt19937_64& rng) {
    const size_t n = cloud.size();
    const bool can_grow = n < cfg.max_gaussians;
    const double split_at = cfg.split_scale_fraction * scene_extent;

    std::vector<uint8_t> densify(n, 0); // 0 keep, 1 clone, 2 split
    for (size_t i = 0; i < n; ++i) {
        const Gaussian4D& g = cloud.gaussians[i];
        if (!can_grow || g.grad2d_count <= 0) continue;
        const double mean_grad = g.grad2d_accum / g.grad2d_count;
        if (mean_grad <= cfg.densify_grad_threshold) continue;
        const Vec4 s = g.scales.s();
        const double max_spatial = std::max({s.x, s.y, s.z});
        densify[i] = max_spatial < split_at ? 1 : 2;
    }

    std::vector<Gaussian4D> next;
    std::vector<int64_t> src_rows;
    next.reserve(n + n / 4);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto reset_stats = [](Gaussian4D& g) {
        g.grad2d_accum = 0;
        g.grad2d_count = 0;
    };

    // survivors first (split parents are replaced by their children)
    for (size_t i = 0; i < n; ++i) {
        if (cloud.gaussians[i].opacity() < cfg.prune_opacity) continue;
        if (densify[i] == 2) continue;
        next.push_back(cloud.gaussians[i]);
        reset_stats(next.back());
        src_rows.push_back(static_cast<int64_t>(i));
    }
    for (size_t i = 0; i < n; ++i) {
        const Gaussian4D& g = cloud.gaussians[i];
        if (g.opacity() < cfg.prune_opacity) continue;
        if (densify[i] == 1) {
            next.push_back(g);
            reset_stats(next.back());
            src_rows.push_back(-1);
        } else if (densify[i] == 2) {
            const Mat4 rot = rotor_to_matrix(g.rotor);
            const Vec4 s = g.scales.s();
            for (int child = 0; child < 2; ++child) {
                Gaussian4D c = g;
                Vec4 xi{normal(rng), normal(rng), normal(rng), normal(rng)};
                Vec4 local{s.x * xi.x, s.y * xi.y, s.z * xi.z, s.w * xi.w};
                Vec4 offset = rot * local;
                c.mu = c.mu + offset;
                const double shrink = std::log(1.6);
                for (int k = 0; k < 4; ++k) c.scales.log_s[k] -= shrink;
                reset_stats(c);
                next.push_back(std::move(c));
                src_rows.push_back(-1);
            }
        }
    }

    cloud.gaussians.swap(next);
    state.m = remap(state.m, src_rows, cloud);
    state.v = remap(state.v, src_rows, cloud);
}

EvalResult evaluate(const GaussianCloud& cloud, const SceneDataset& dataset, int threads) {
    EvalResult out;
    if (dataset.frames.empty()) return out;
    RenderOptions opts;
    opts.threads = threads;
    for (const Frame& frame : dataset.frames) {
        RenderBuffers buf = render(cloud, frame.camera, opts);
        // quantize to the 8-bit grid so scores match metrics over saved PNGs
        ImageF got(buf.color.width, buf.color.height, 3);
        for (size_t k = 0; k < buf.color.data.size(); ++k)
            got.data[k] = std::lround(std::clamp(buf.color.data[k], 0.0, 1.0) * 255.0) / 255.0;
        FrameTargets t = targets_from_frame(frame);
        Image<uint8_t> include;
        if (!t.tool_mask.empty()) {
            include = Image<uint8_t>(t.rgb.width, t.rgb.height, 1, 1);
            for (int y = 0; y < include.height; ++y)
                for (int x = 0; x < include.width; ++x)
                    include.at(x, y) = t.tool_mask.at(x, y) ? 0 : 1;
        }
        const Image<uint8_t>* inc = include.empty() ? nullptr : &include;
        out.per_frame.emplace_back(psnr(got, t.rgb, inc), ssim(got, t.rgb, inc));
    }
    for (auto& [p, s] : out.per_frame) {
        out.psnr += p;
        out.ssim += s;
    }
    out.psnr /= static_cast<double>(out.per_frame.size());
    out.ssim /= static_cast<double>(out.per_frame.size());
    return out;
}

GaussianCloud initialize_cloud(const SceneDataset& train_set, const TrainConfig& cfg,
                               const AppearanceConfig& appearance, std::mt19937_64& rng) {
    if (train_set.frames.empty())
        throw std::invalid_argument("train: dataset has no frames");

    GaussianCloud cloud;
    cloud.appearance = appearance;

    struct Seed {
        Vec3 pos;
        Vec3 rgb;
        double t;
    };
    std::vector<Seed> seeds;

    bool has_depth = false;
    for (const Frame& f : train_set.frames) has_depth |= !f.depth.empty();

    if (has_depth) {
        const int k_frames = std::min<int>(4, static_cast<int>(train_set.frames.size()));
        const int quota = (cfg.init_count + k_frames - 1) / k_frames;
        for (int fi = 0; fi < k_frames; ++fi) {
            const Frame& f = train_set.frames[fi];
            if (f.depth.empty()) continue;
            const Camera& cam = f.camera;
            const Mat3 rt = cam.rotation.transposed();
            const int stride = std::max(
                1, static_cast<int>(std::sqrt(static_cast<double>(f.depth.width) *
                                              f.depth.height / std::max(1, quota))));
            for (int y = stride / 2; y < f.depth.height; y += stride)
                for (int x = stride / 2; x < f.depth.width; x += stride) {
                    const double d = f.depth.at(x, y);
                    if (!(d > 0)) continue;
                    Vec3 pc{d * (x + 0.5 - cam.cx) / cam.fx, d * (y + 0.5 - cam.cy) / cam.fy, d};
                    Seed s;
                    s.pos = rt * (pc - cam.translation);
                    s.rgb = {f.rgb.at(x, y, 0), f.rgb.at(x, y, 1), f.rgb.at(x, y, 2)};
                    s.t = cam.time;
                    seeds.push_back(s);
                }
        }
        if (static_cast<int>(seeds.size()) > cfg.init_count) {
            std::vector<Seed> picked;
            const double step = static_cast<double>(seeds.size()) / cfg.init_count;
            for (int i = 0; i < cfg.init_count; ++i)
                picked.push_back(seeds[static_cast<size_t>(i * step)]);
            seeds.swap(picked);
        }
    }
    if (seeds.empty()) {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        const Vec3 span = train_set.bbox_max - train_set.bbox_min;
        for (int i = 0; i < cfg.init_count; ++i) {
            Seed s;
            s.pos = train_set.bbox_min +
                    Vec3{span.x * uni(rng), span.y * uni(rng), span.z * uni(rng)};
            s.rgb = {0.5, 0.5, 0.5};
            s.t = uni(rng);
            seeds.push_back(s);
        }
    }

    const double extent = train_set.extent();
    const double s_init =
        std::max(1e-4, 0.35 * extent / std::cbrt(static_cast<double>(seeds.size())));
    std::normal_distribution<double> tiny(0.0, 0.01);
    constexpr double y00 = 0.28209479177387814;

    for (const Seed& s : seeds) {
        Gaussian4D g;
        g.mu = {s.pos.x, s.pos.y, s.pos.z, s.t};
        g.rotor.q_left = Quat{1.0 + tiny(rng), tiny(rng), tiny(rng), tiny(rng)}.normalized();
        g.rotor.q_right = Quat{1.0 + tiny(rng), tiny(rng), tiny(rng), tiny(rng)}.normalized();
        g.scales.log_s = {std::log(s_init), std::log(s_init), std::log(s_init), std::log(0.5)};
        g.opacity_logit = inv_sigmoid(0.1);
        g.sh = AppearanceCoeffs::zeros(appearance);
        for (int c = 0; c < 3; ++c) g.sh.k[c] = ((&s.rgb.x)[c] - 0.5) / y00;
        cloud.gaussians.push_back(std::move(g));
    }
    return cloud;
}

TrainResult train(const SceneDataset& train_set, const SceneDataset& val_set,
                  const TrainConfig& cfg, const AppearanceConfig& appearance,
                  const LossWeights& weights, const CheckpointHook& on_checkpoint) {
    cfg.validate();
    weights.validate();
    if (train_set.frames.empty())
        throw std::invalid_argument("train: dataset has no frames/poses");

    std::mt19937_64 rng(cfg.seed);
    TrainResult result;
    result.cloud = initialize_cloud(train_set, cfg, appearance, rng);
    OptimizerState state = OptimizerState::zeros(result.cloud);

    RenderOptions ropts;
    ropts.threads = cfg.threads;
    ropts.time_cull_threshold = cfg.time_cull_threshold;

    std::uniform_int_distribution<size_t> pick(0, train_set.frames.size() - 1);
    const double extent = train_set.extent();

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const auto t_start = std::chrono::steady_clock::now();
        ropts.active_sh_degree =
            cfg.sh_unlock_interval > 0
                ? std::min(appearance.sh_degree, iter / cfg.sh_unlock_interval)
                : appearance.sh_degree;

        const Frame& frame = train_set.frames[pick(rng)];
        FrameTargets targets = targets_from_frame(frame);
        BackwardResult bw = backward(result.cloud, frame.camera, targets, weights, ropts);

        for (size_t i = 0; i < result.cloud.size(); ++i) {
            if (!bw.visible[i]) continue;
            result.cloud.gaussians[i].grad2d_accum += bw.screen_grad_norm[i];
            result.cloud.gaussians[i].grad2d_count += 1.0;
        }

        adam_step(result.cloud, state, bw.grads, cfg, iter);

        if (cfg.densify_interval > 0 && (iter + 1) % cfg.densify_interval == 0 &&
            iter + 1 <= cfg.densify_until_fraction * cfg.iterations)
            densify_and_prune(result.cloud, state, cfg, extent, rng);

        MetricsRow row;
        row.iteration = iter + 1;
        row.loss = bw.loss;
        row.gaussian_count = result.cloud.size();
        const auto t_end = std::chrono::steady_clock::now();
        row.wall_ms = std::chrono::duration<double, std::milli>(t_end - t_start).count();

        const bool last = iter + 1 == cfg.iterations;
        if ((cfg.eval_interval > 0 && (iter + 1) % cfg.eval_interval == 0) || last) {
            if (!val_set.frames.empty()) {
                EvalResult ev = evaluate(result.cloud, val_set, cfg.threads);
                row.has_eval = true;
                row.psnr = ev.psnr;
                row.ssim = ev.ssim;
            }
            if (on_checkpoint) on_checkpoint(result.cloud, iter + 1);
        }
        result.log.push_back(row);
    }
    return result;
}

}  // namespace sp4d
