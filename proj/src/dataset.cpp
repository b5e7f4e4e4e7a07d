#include "sp4d/dataset.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "sp4d/image_io.hpp"
#include "sp4d/renderer.hpp"

namespace fs = std::filesystem;

namespace sp4d {

namespace {

std::string frame_name(int i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d%s", i, ext);
    return buf;
}

std::vector<std::vector<double>> read_rows(const fs::path& file, size_t expect_cols) {
    std::ifstream f(file);
    if (!f) throw std::runtime_error("missing file: " + file.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::vector<double> vals;
        double v;
        while (ss >> v) vals.push_back(v);
        std::string rest;
        if (ss.clear(), ss >> rest, !rest.empty())
            throw std::runtime_error(file.string() + ": non-numeric token on line " +
                                     std::to_string(lineno));
        if (expect_cols && vals.size() != expect_cols)
            throw std::runtime_error(file.string() + ": expected " + std::to_string(expect_cols) +
                                     " values on line " + std::to_string(lineno) + ", got " +
                                     std::to_string(vals.size()));
        rows.push_back(std::move(vals));
    }
    return rows;
}

Camera camera_from_row(const std::vector<double>& row, int width, int height,
                       const fs::path& file, size_t index) {
    Camera cam;
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.rotation(r, c) = row[r * 4 + c];
        cam.translation[r] = row[r * 4 + 3];
    }
    cam.fx = row[12];
    cam.fy = row[13];
    cam.cx = row[14];
    cam.cy = row[15];
    cam.width = width;
    cam.height = height;
    cam.near = 1e-3;
    cam.far = 1e6;
    try {
        cam.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error(file.string() + ": frame " + std::to_string(index) + ": " +
                                 e.what());
    }
    return cam;
}

}  // namespace

SceneDataset load_dataset(const std::string& path, Split split, int split_ratio) {
    if (split_ratio < 1) throw std::invalid_argument("split ratio must be >= 1");
    const fs::path root(path);
    if (!fs::exists(root / "images"))
        throw std::runtime_error("dataset has no images/ directory: " + path);

    int count = 0;
    while (fs::exists(root / "images" / frame_name(count, ".png"))) ++count;
    if (count == 0) throw std::runtime_error("dataset has no frames: " + path);

    auto poses = read_rows(root / "poses.txt", 16);
    if (static_cast<int>(poses.size()) != count)
        throw std::runtime_error((root / "poses.txt").string() + ": " +
                                 std::to_string(poses.size()) + " rows for " +
                                 std::to_string(count) + " frames");
    auto times = read_rows(root / "times.txt", 1);
    if (static_cast<int>(times.size()) != count)
        throw std::runtime_error((root / "times.txt").string() + ": " +
                                 std::to_string(times.size()) + " rows for " +
                                 std::to_string(count) + " frames");
    for (int i = 1; i < count; ++i)
        if (!(times[i][0] > times[i - 1][0]))
            throw std::runtime_error((root / "times.txt").string() +
                                     ": timestamps must be strictly increasing");
    for (int i = 1; i < count; ++i)
        for (int c = 12; c < 16; ++c)
            if (poses[i][c] != poses[0][c])
                throw std::runtime_error((root / "poses.txt").string() +
                                         ": intrinsics must be shared across frames");

    const double t0 = times.front()[0];
    const double t_span = std::max(times.back()[0] - t0, 0.0);

    SceneDataset all;
    for (int i = 0; i < count; ++i) {
        Frame frame;
        ImageU8 rgb8 = read_png_rgb8((root / "images" / frame_name(i, ".png")).string());
        frame.rgb = Image<float>(rgb8.width, rgb8.height, 3);
        for (size_t k = 0; k < rgb8.data.size(); ++k)
            frame.rgb.data[k] = static_cast<float>(rgb8.data[k]) / 255.0f;

        const fs::path pfm = root / "depth" / frame_name(i, ".pfm");
        const fs::path dpng = root / "depth" / frame_name(i, ".png");
        if (fs::exists(pfm)) {
            frame.depth = read_pfm(pfm.string());
        } else if (fs::exists(dpng)) {
            Image<uint16_t> mm = read_png_gray16(dpng.string());
            frame.depth = Image<float>(mm.width, mm.height, 1);
            for (size_t k = 0; k < mm.data.size(); ++k)
                frame.depth.data[k] = static_cast<float>(mm.data[k]) / 1000.0f;
        }
        const fs::path mask = root / "masks" / frame_name(i, ".png");
        if (fs::exists(mask)) frame.tool_mask = read_png_gray8(mask.string());

        if (!all.frames.empty()) {
            const Frame& first = all.frames.front();
            if (frame.rgb.width != first.rgb.width || frame.rgb.height != first.rgb.height)
                throw std::runtime_error("dataset frames have mixed dimensions: " + path);
        }
        if (!frame.depth.empty() &&
            (frame.depth.width != frame.rgb.width || frame.depth.height != frame.rgb.height))
            throw std::runtime_error("depth size differs from image size: frame " +
                                     std::to_string(i));

        frame.camera = camera_from_row(poses[i], frame.rgb.width, frame.rgb.height,
                                       root / "poses.txt", i);
        frame.camera.time = t_span > 0 ? (times[i][0] - t0) / t_span : 0.0;
        all.frames.push_back(std::move(frame));
    }

    // Scene bounds: back-projected valid depths when present, else camera centers.
    bool has_depth = false;
    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
    auto grow = [&](const Vec3& p) {
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], p[c]);
            hi[c] = std::max(hi[c], p[c]);
        }
    };
    for (const Frame& f : all.frames) {
        if (f.depth.empty()) continue;
        const Camera& cam = f.camera;
        Mat3 rt = cam.rotation.transposed();
        for (int y = 0; y < f.depth.height; y += 8)
            for (int x = 0; x < f.depth.width; x += 8) {
                const double d = f.depth.at(x, y);
                if (!(d > 0)) continue;
                has_depth = true;
                Vec3 pc{d * (x + 0.5 - cam.cx) / cam.fx, d * (y + 0.5 - cam.cy) / cam.fy, d};
                grow(rt * (pc - cam.translation));
            }
    }
    if (!has_depth)
        for (const Frame& f : all.frames) grow(f.camera.center());
    Vec3 span = hi - lo;
    const double pad = std::max({span.x, span.y, span.z, 0.5}) * 0.1;
    all.bbox_min = lo - Vec3{pad, pad, pad};
    all.bbox_max = hi + Vec3{pad, pad, pad};

    if (split == Split::kAll) return all;
    SceneDataset out;
    out.bbox_min = all.bbox_min;
    out.bbox_max = all.bbox_max;
    const int block = split_ratio + 1;
    for (int i = 0; i < count; ++i) {
        const bool is_val = (i % block) == split_ratio;
        if ((split == Split::kVal) == is_val) out.frames.push_back(std::move(all.frames[i]));
    }
    return out;
}

void write_dataset(const SceneDataset& dataset, const std::string& dir) {
    const fs::path root(dir);
    fs::create_directories(root / "images");
    bool any_depth = false, any_mask = false;
    for (const Frame& f : dataset.frames) {
        any_depth |= !f.depth.empty();
        any_mask |= !f.tool_mask.empty();
    }
    if (any_depth) fs::create_directories(root / "depth");
    if (any_mask) fs::create_directories(root / "masks");

    std::ofstream poses(root / "poses.txt");
    std::ofstream times(root / "times.txt");
    poses.precision(17);
    times.precision(17);
    for (size_t i = 0; i < dataset.frames.size(); ++i) {
        const Frame& f = dataset.frames[i];
        ImageU8 rgb8(f.rgb.width, f.rgb.height, 3);
        for (size_t k = 0; k < f.rgb.data.size(); ++k) {
            const double v = std::clamp(static_cast<double>(f.rgb.data[k]), 0.0, 1.0);
            rgb8.data[k] = static_cast<uint8_t>(std::lround(v * 255.0));
        }
        write_png_rgb8((root / "images" / frame_name(static_cast<int>(i), ".png")).string(),
                       rgb8);
        if (!f.depth.empty())
            write_pfm((root / "depth" / frame_name(static_cast<int>(i), ".pfm")).string(),
                      f.depth);
        if (!f.tool_mask.empty())
            write_png_gray8((root / "masks" / frame_name(static_cast<int>(i), ".png")).string(),
                            f.tool_mask);

        const Camera& cam = f.camera;
        for (int r = 0; r < 3; ++r)
            poses << cam.rotation(r, 0) << " " << cam.rotation(r, 1) << " " << cam.rotation(r, 2)
                  << " " << cam.translation[r] << " ";
        poses << cam.fx << " " << cam.fy << " " << cam.cx << " " << cam.cy << "\n";
        times << f.camera.time << "\n";
    }
}

FrameTargets targets_from_frame(const Frame& frame) {
    FrameTargets t;
    t.rgb = ImageF(frame.rgb.width, frame.rgb.height, 3);
    for (size_t k = 0; k < frame.rgb.data.size(); ++k) t.rgb.data[k] = frame.rgb.data[k];
    if (!frame.depth.empty()) {
        t.depth = ImageF(frame.depth.width, frame.depth.height, 1);
        for (size_t k = 0; k < frame.depth.data.size(); ++k)
            t.depth.data[k] = frame.depth.data[k];
    }
    t.tool_mask = frame.tool_mask;
    return t;
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

Quat random_unit_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Quat q{n(rng), n(rng), n(rng), n(rng)};
    return q.normalized();
}

}  // namespace

SyntheticScene make_synthetic(const SyntheticSpec& spec) {
    if (spec.gaussians < 1 || spec.frames < 1 || spec.width < 8 || spec.height < 8)
        throw std::invalid_argument("make_synthetic: degenerate spec");
    const bool is_static = spec.motion == "static";
    const bool is_osc = spec.motion == "oscillating";
    const bool is_shear = spec.motion == "shearing";
    if (!is_static && !is_osc && !is_shear)
        throw std::invalid_argument("make_synthetic: unknown motion type " + spec.motion);

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    SyntheticScene out;
    out.cloud.appearance = AppearanceConfig{};

    // knot chain along the time axis per blob; 8 interior steps of 1/7 with
    // one margin knot on each side
    const int knots = is_static ? 1 : 10;
    const int blobs = std::max(1, (spec.gaussians + knots / 2) / knots);
    const double knot_sigma_t = 0.75 / 7.0;

    for (int b = 0; b < blobs; ++b) {
        const Vec3 base{uni(rng) - 0.5, uni(rng) - 0.5, uni(rng) - 0.5};
        const double s_major = 0.06 + 0.06 * uni(rng);
        const double s_minor = s_major * (0.15 + 0.15 * uni(rng));
        const Quat q = random_unit_quat(rng);
        const double opacity = 0.7 + 0.25 * uni(rng);
        const Vec3 base_rgb{0.25 + 0.6 * uni(rng), 0.25 + 0.6 * uni(rng),
                            0.25 + 0.6 * uni(rng)};
        Vec3 amp{uni(rng) - 0.5, uni(rng) - 0.5, uni(rng) - 0.5};
        amp = amp.normalized() * (0.08 + 0.12 * uni(rng));
        double view_coeff[3][3];
        for (auto& row : view_coeff)
            for (double& v : row) v = 0.16 * (uni(rng) - 0.5);
        const double pulse = is_osc ? 0.08 * (uni(rng) - 0.5) : 0.0;

        for (int k = 0; k < knots; ++k) {
            Gaussian4D g;
            const int kk = k - 1; // knot index -1..8
            double mu_t = 0.5, log_st = std::log(50.0);
            Vec3 pos = base;
            if (!is_static) {
                mu_t = kk / 7.0;
                log_st = std::log(knot_sigma_t);
                if (is_osc) {
                    const double phase = kk / 7.0 - std::floor(kk / 7.0);
                    pos = base + amp * std::sin(kTwoPi * phase);
                } else { // shearing: linear drift with a shear-field velocity
                    const Vec3 vel{0.3 * base.y, 0.15 * base.z, 0.0};
                    pos = base + vel * mu_t;
                }
            }
            g.mu = {pos.x, pos.y, pos.z, mu_t};
            g.rotor.q_left = q;
            g.rotor.q_right = {q.w, -q.x, -q.y, -q.z}; // spatial-only rotation
            g.scales.log_s = {std::log(s_major), std::log(s_major), std::log(s_minor), log_st};
            g.opacity_logit = inv_sigmoid(opacity);
            g.sh = AppearanceCoeffs::zeros(out.cloud.appearance);
            const double y00 = 0.28209479177387814;
            for (int c = 0; c < 3; ++c) {
                g.sh.k[0 * 3 + c] = ((&base_rgb.x)[c] - 0.5) / y00;
                for (int lm = 1; lm < 4; ++lm) g.sh.k[lm * 3 + c] = view_coeff[lm - 1][c];
                if (pulse != 0.0) {
                    const int band1 = out.cloud.appearance.basis_per_band();
                    g.sh.k[(band1 + 0) * 3 + c] = pulse;
                }
            }
            out.cloud.gaussians.push_back(std::move(g));
        }
    }

    // bounds from the actual primitives
    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
    for (const Gaussian4D& g : out.cloud.gaussians) {
        const Vec4 s = g.scales.s();
        const double r = 3.0 * std::max({s.x, s.y, s.z});
        for (int c = 0; c < 3; ++c) {
            lo[c] = std::min(lo[c], g.mu[c] - r);
            hi[c] = std::max(hi[c], g.mu[c] + r);
        }
    }
    const Vec3 pad = (hi - lo) * 0.05;
    out.dataset.bbox_min = lo - pad;
    out.dataset.bbox_max = hi + pad;

    // orbit cameras
    const double fx = 0.9 * spec.width;
    RenderOptions ropts;
    ropts.threads = 2;
    for (int i = 0; i < spec.frames; ++i) {
        const double u = spec.frames > 1 ? static_cast<double>(i) / (spec.frames - 1) : 0.0;
        const double theta = (u - 0.5) * 0.9; // ~52 degree arc
        const Vec3 eye{2.3 * std::sin(theta), -0.7, -2.3 * std::cos(theta)};
        Camera cam = look_at(eye, Vec3{0, 0, 0}, Vec3{0, 1, 0}, fx, fx, spec.width, spec.height);
        cam.near = 0.05;
        cam.far = 50.0;
        cam.time = u;

        RenderBuffers buf = render(out.cloud, cam, ropts);
        Frame frame;
        frame.camera = cam;
        frame.rgb = Image<float>(spec.width, spec.height, 3);
        for (size_t k = 0; k < buf.color.data.size(); ++k)
            frame.rgb.data[k] =
                static_cast<float>(std::clamp(buf.color.data[k], 0.0, 1.0));
        frame.depth = Image<float>(spec.width, spec.height, 1);
        for (int y = 0; y < spec.height; ++y)
            for (int x = 0; x < spec.width; ++x)
                frame.depth.at(x, y) = buf.alpha.at(x, y) > 0.5
                                           ? static_cast<float>(buf.depth.at(x, y))
                                           : 0.0f;
        out.dataset.frames.push_back(std::move(frame));
    }
    return out;
}

}  // namespace sp4d
