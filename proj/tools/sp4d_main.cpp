#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "sp4d/checkpoint.hpp"
#include "sp4d/config.hpp"
#include "sp4d/dataset.hpp"
#include "sp4d/image_io.hpp"
#include "sp4d/metrics.hpp"
#include "sp4d/renderer.hpp"
#include "sp4d/trainer.hpp"

namespace fs = std::filesystem;
using namespace sp4d;

namespace {

int env_threads() {
    if (const char* v = std::getenv("SP4D_THREADS")) {
        const int n = std::atoi(v);
        if (n > 0) return n;
    }
    return 1;
}

std::string frame_file(const char* stem, int i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%06d%s", stem, i, ext);
    return buf;
}

ImageU8 quantize_color(const ImageF& img) {
    ImageU8 out(img.width, img.height, 3);
    for (size_t k = 0; k < img.data.size(); ++k)
        out.data[k] = static_cast<uint8_t>(
            std::lround(std::clamp(img.data[k], 0.0, 1.0) * 255.0));
    return out;
}

void write_render_outputs(const RenderBuffers& buf, const fs::path& dir, int index) {
    write_png_rgb8((dir / frame_file("color", index, ".png")).string(),
                   quantize_color(buf.color));
    Image<float> depth(buf.depth.width, buf.depth.height, 1);
    for (size_t k = 0; k < depth.data.size(); ++k)
        depth.data[k] = static_cast<float>(buf.depth.data[k]);
    write_pfm((dir / frame_file("depth", index, ".pfm")).string(), depth);
    // normals mapped n -> 0.5 n + 0.5
    ImageF nmap(buf.normal.width, buf.normal.height, 3);
    for (size_t k = 0; k < nmap.data.size(); ++k)
        nmap.data[k] = 0.5 * buf.normal.data[k] + 0.5;
    write_png_rgb8((dir / frame_file("normal", index, ".png")).string(), quantize_color(nmap));
    ImageU8 alpha(buf.alpha.width, buf.alpha.height, 1);
    for (size_t k = 0; k < alpha.data.size(); ++k)
        alpha.data[k] = static_cast<uint8_t>(
            std::lround(std::clamp(buf.alpha.data[k], 0.0, 1.0) * 255.0));
    write_png_gray8((dir / frame_file("alpha", index, ".png")).string(), alpha);
}

std::vector<Camera> load_camera_path(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open camera path: " + path);
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::vector<double> vals;
        double v;
        while (ss >> v) vals.push_back(v);
        if (!vals.empty()) rows.push_back(std::move(vals));
    }
    if (rows.empty() || rows.front().size() != 4)
        throw std::runtime_error("camera path must start with 'width height near far': " + path);
    const int w = static_cast<int>(rows[0][0]), h = static_cast<int>(rows[0][1]);
    const double near = rows[0][2], far = rows[0][3];
    std::vector<Camera> cams;
    for (size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != 17)
            throw std::runtime_error(path + ": pose row " + std::to_string(i) +
                                     " must have 17 values (12 extrinsics, fx fy cx cy, time)");
        Camera cam;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) cam.rotation(r, c) = rows[i][r * 4 + c];
            cam.translation[r] = rows[i][r * 4 + 3];
        }
        cam.fx = rows[i][12];
        cam.fy = rows[i][13];
        cam.cx = rows[i][14];
        cam.cy = rows[i][15];
        cam.time = rows[i][16];
        cam.width = w;
        cam.height = h;
        cam.near = near;
        cam.far = far;
        cam.validate();
        cams.push_back(cam);
    }
    return cams;
}

// deterministic fixtures for check-grad
GaussianCloud gradcheck_cloud(int n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nrm(0.0, 1.0);
    GaussianCloud cloud;
    cloud.appearance = AppearanceConfig{};
    for (int i = 0; i < n; ++i) {
        Gaussian4D g;
        g.mu = {0.8 * (u(rng) - 0.5), 0.8 * (u(rng) - 0.5), 0.8 * (u(rng) - 0.5),
                0.3 + 0.4 * u(rng)};
        g.rotor.q_left = Quat{nrm(rng), nrm(rng), nrm(rng), nrm(rng)}.normalized();
        g.rotor.q_right = Quat{nrm(rng), nrm(rng), nrm(rng), nrm(rng)}.normalized();
        g.scales.log_s = {std::log(0.1 + 0.2 * u(rng)), std::log(0.1 + 0.2 * u(rng)),
                          std::log(0.05 + 0.1 * u(rng)), std::log(0.4 + 0.4 * u(rng))};
        g.opacity_logit = 2.0 * u(rng) - 1.0;
        g.sh = AppearanceCoeffs::zeros(cloud.appearance);
        for (size_t k = 0; k < g.sh.k.size(); ++k)
            g.sh.k[k] = (k < 3 ? 1.0 : 0.4) * (u(rng) - 0.5);
        for (double& p : g.sh.phases) p = u(rng) - 0.5;
        cloud.gaussians.push_back(std::move(g));
    }
    return cloud;
}

struct GradFixture {
    GaussianCloud cloud;
    Camera camera;
    FrameTargets targets;
};

GradFixture gradcheck_fixture(int n, uint64_t seed, int size) {
    GradFixture fx;
    fx.cloud = gradcheck_cloud(n, seed);
    fx.camera = look_at({0.12, -0.2, -2.3}, {0, 0, 0}, {0, 1, 0}, 1.2 * size, 1.2 * size,
                        size, size);
    fx.camera.near = 0.05;
    fx.camera.far = 50.0;
    fx.camera.time = 0.45;

    GaussianCloud target_cloud = gradcheck_cloud(n, seed + 17);
    RenderBuffers buf = render(target_cloud, fx.camera);
    fx.targets.rgb = ImageF(size, size, 3);
    for (size_t k = 0; k < buf.color.data.size(); ++k)
        fx.targets.rgb.data[k] = std::clamp(buf.color.data[k], 0.0, 1.0);
    fx.targets.depth = ImageF(size, size, 1, 0.0);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (buf.alpha.at(x, y) > 0.5) fx.targets.depth.at(x, y) = buf.depth.at(x, y);
    return fx;
}

int cmd_check_grad(int threads, bool json, bool inject_fault) {
    LossWeights weights;
    RenderOptions opts;
    opts.threads = threads;
    const auto t0 = std::chrono::steady_clock::now();

    bool ok = true;
    std::ostringstream js;
    js << "{\n";
    for (int pass = 0; pass < 2; ++pass) {
        const int n = pass == 0 ? 1 : 20;
        GradFixture fx = gradcheck_fixture(n, 7 + pass, 16);
        GradCheckReport rep = check_gradients(fx.cloud, fx.camera, fx.targets, weights, 1e-4,
                                              opts, inject_fault ? 0 : -1);
        ok = ok && rep.passed(1e-3);
        if (!json)
            std::printf("fixture: %d gaussian%s, 16x16\n", n, n == 1 ? "" : "s");
        js << "  \"fixture_" << n << "\": {";
        for (size_t i = 0; i < rep.groups.size(); ++i) {
            const auto& g = rep.groups[i];
            if (!json)
                std::printf("  %-8s max_rel_err %.3e (gaussian %zu, component %d) %s\n",
                            g.name.c_str(), g.max_rel_err, g.argmax_gaussian,
                            g.argmax_component, g.max_rel_err <= 1e-3 ? "ok" : "FAIL");
            js << (i ? ", " : "") << "\"" << g.name << "\": {\"max_rel_err\": " << g.max_rel_err
               << ", \"argmax\": " << g.argmax_gaussian << "}";
        }
        js << "}" << (pass == 0 ? "," : "") << "\n";
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    js << "}\n";
    if (json)
        std::fputs(js.str().c_str(), stdout);
    else
        std::printf("gradient check %s in %.1f s\n", ok ? "passed" : "FAILED", secs);
    return ok ? 0 : 1;
}

void write_metrics_csv(const std::vector<MetricsRow>& log, const fs::path& dir) {
    std::ofstream csv(dir / "metrics.csv");
    csv << "iteration,total,l1,ssim_term,depth_l1,enac,psnr,ssim,gaussian_count\n";
    csv.precision(17);
    for (const MetricsRow& r : log) {
        csv << r.iteration << "," << r.loss.total << "," << r.loss.l1 << ","
            << (1.0 - r.loss.ssim) << "," << r.loss.depth_l1 << "," << r.loss.enac << ",";
        if (r.has_eval)
            csv << r.psnr << "," << r.ssim;
        else
            csv << ",";
        csv << "," << r.gaussian_count << "\n";
    }
    // wall-clock goes to a separate file so reruns produce identical metrics
    std::ofstream timing(dir / "timing.csv");
    timing << "iteration,wall_ms\n";
    for (const MetricsRow& r : log) timing << r.iteration << "," << r.wall_ms << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"4D Gaussian splatting for dynamic scene reconstruction"};
    app.require_subcommand(1);

    std::string config_path, dataset_path, out_dir, checkpoint_path, camera_path, split = "val";
    std::vector<std::string> sets;
    int threads = env_threads();
    int64_t seed = -1;
    bool json = false, inject_fault = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (flat TOML)");
        cmd->add_option("--set", sets, "override config entries as section.key=value");
        cmd->add_option("--threads", threads, "worker threads (env SP4D_THREADS)");
        cmd->add_option("--seed", seed, "override train.seed / synthetic.seed");
    };

    CLI::App* c_train = app.add_subcommand("train", "optimize a cloud against a dataset");
    add_common(c_train);
    c_train->add_option("--dataset", dataset_path, "dataset directory (overrides config)");
    c_train->add_option("--out", out_dir, "output directory (overrides config)");

    CLI::App* c_render = app.add_subcommand("render", "render a checkpoint along a camera path");
    add_common(c_render);
    c_render->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    c_render->add_option("--camera-path", camera_path, "camera path file")->required();
    c_render->add_option("--out", out_dir, "output directory")->required();

    CLI::App* c_eval = app.add_subcommand("eval", "PSNR/SSIM of a checkpoint on a dataset split");
    add_common(c_eval);
    c_eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    c_eval->add_option("--dataset", dataset_path, "dataset directory")->required();
    c_eval->add_option("--split", split, "train|val|all");
    c_eval->add_option("--out", out_dir, "optional CSV output path");

    CLI::App* c_grad = app.add_subcommand("check-grad", "analytic vs finite-difference gradients");
    add_common(c_grad);
    c_grad->add_flag("--json", json, "machine-readable report");
    c_grad->add_flag("--inject-fault", inject_fault, "corrupt one partial (must fail)");

    CLI::App* c_synth = app.add_subcommand("make-synthetic", "generate a synthetic dataset");
    add_common(c_synth);
    c_synth->add_option("--out", out_dir, "output dataset directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        Config cfg = load_config(config_path);
        apply_overrides(cfg, sets);
        if (!dataset_path.empty()) cfg.dataset_path = dataset_path;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.train.threads = threads;
        if (seed >= 0) {
            cfg.train.seed = static_cast<uint64_t>(seed);
            cfg.synthetic.seed = static_cast<uint64_t>(seed);
        }

        if (c_train->parsed()) {
            if (cfg.dataset_path.empty())
                throw std::runtime_error("train: no dataset path (set dataset.path or --dataset)");
            SceneDataset train_set = load_dataset(cfg.dataset_path, Split::kTrain);
            SceneDataset val_set = load_dataset(cfg.dataset_path, Split::kVal);
            fs::create_directories(cfg.out_dir);
            {
                std::ofstream rc(fs::path(cfg.out_dir) / "resolved_config.toml");
                rc << serialize_config(cfg);
            }
            CheckpointHook hook = [&](const GaussianCloud& cloud, int iter) {
                save_checkpoint(cloud,
                                (fs::path(cfg.out_dir) / frame_file("ckpt", iter, ".sp4d")).string(),
                                static_cast<uint64_t>(iter));
            };
            TrainResult result =
                train(train_set, val_set, cfg.train, cfg.appearance, cfg.loss, hook);
            save_checkpoint(result.cloud, (fs::path(cfg.out_dir) / "final.sp4d").string(),
                            static_cast<uint64_t>(cfg.train.iterations));
            write_metrics_csv(result.log, cfg.out_dir);
            for (auto it = result.log.rbegin(); it != result.log.rend(); ++it)
                if (it->has_eval) {
                    std::printf("final: %zu gaussians, val PSNR %.2f dB, SSIM %.4f\n",
                                result.cloud.size(), it->psnr, it->ssim);
                    break;
                }
            return 0;
        }

        if (c_render->parsed()) {
            GaussianCloud cloud = load_checkpoint(checkpoint_path);
            std::vector<Camera> cams = load_camera_path(camera_path);
            fs::create_directories(out_dir);
            RenderOptions opts;
            opts.threads = threads;
            opts.time_cull_threshold = cfg.train.time_cull_threshold;
            double render_seconds = 0;
            int timed = 0;
            std::vector<RenderBuffers> buffers;
            buffers.reserve(cams.size());
            for (const Camera& cam : cams) {
                const auto t0 = std::chrono::steady_clock::now();
                buffers.push_back(render(cloud, cam, opts));
                render_seconds +=
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                ++timed;
            }
            // keep timing render-only and averaged over at least 30 frames
            while (timed < 30 && !cams.empty()) {
                const Camera& cam = cams[timed % cams.size()];
                const auto t0 = std::chrono::steady_clock::now();
                RenderBuffers scratch = render(cloud, cam, opts);
                render_seconds +=
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                ++timed;
            }
            for (size_t i = 0; i < buffers.size(); ++i)
                write_render_outputs(buffers[i], out_dir, static_cast<int>(i));
            std::printf("FPS: %.2f (%dx%d, %zu gaussians, %d frames timed, render only)\n",
                        timed / render_seconds, cams.empty() ? 0 : cams[0].width,
                        cams.empty() ? 0 : cams[0].height, cloud.size(), timed);
            return 0;
        }

        if (c_eval->parsed()) {
            GaussianCloud cloud = load_checkpoint(checkpoint_path);
            Split sp = split == "train" ? Split::kTrain
                                        : (split == "all" ? Split::kAll : Split::kVal);
            SceneDataset ds = load_dataset(cfg.dataset_path, sp);
            EvalResult ev = evaluate(cloud, ds, threads);
            std::ofstream csv;
            if (!out_dir.empty()) {
                csv.open(out_dir);
                csv << "frame,psnr,ssim\n";
                csv.precision(17);
            }
            for (size_t i = 0; i < ev.per_frame.size(); ++i) {
                std::printf("frame %zu: PSNR %.4f SSIM %.6f\n", i, ev.per_frame[i].first,
                            ev.per_frame[i].second);
                if (csv.is_open())
                    csv << i << "," << ev.per_frame[i].first << "," << ev.per_frame[i].second
                        << "\n";
            }
            std::printf("mean: PSNR %.4f SSIM %.6f (%zu frames)\n", ev.psnr, ev.ssim,
                        ev.per_frame.size());
            return 0;
        }

        if (c_grad->parsed()) return cmd_check_grad(threads, json, inject_fault);

        if (c_synth->parsed()) {
            SyntheticScene scene = make_synthetic(cfg.synthetic);
            write_dataset(scene.dataset, out_dir);
            save_checkpoint(scene.cloud, (fs::path(out_dir) / "ground_truth.sp4d").string());
            {
                std::ofstream rc(fs::path(out_dir) / "resolved_config.toml");
                rc << serialize_config(cfg);
            }
            std::printf("wrote %zu frames, %zu ground-truth gaussians to %s\n",
                        scene.dataset.frames.size(), scene.cloud.size(), out_dir.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
