#include "sp4d/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "sp4d/parallel.hpp"

namespace sp4d {

namespace {

const double kMinPower = std::log(kMinFalloff);
// Mahalanobis^2 radius covering every weight above the falloff cutoff.
const double kCutoffRadius2 = -2.0 * kMinPower;

struct CompositeState {
    double t = 1.0;
    Vec3 color{0, 0, 0};
    double alpha = 0;
    double depth_num = 0;
    Vec3 normal{0, 0, 0};
    int consumed = 0;
};

// Front-to-back compositing of one pixel over a candidate sequence.
// `consumed` counts candidate entries examined before termination, so the
// backward pass can replay the identical walk.
template <typename GetSplat>
CompositeState composite_pixel(double px, double py, int count, GetSplat&& get) {
    CompositeState st;
    for (int i = 0; i < count; ++i) {
        const Splat2D& s = get(i);
        const double dx = px - s.mean2.x;
        const double dy = py - s.mean2.y;
        const double power = -0.5 * (s.inv_cov2.xx * dx * dx + s.inv_cov2.yy * dy * dy) -
                             s.inv_cov2.xy * dx * dy;
        if (power < kMinPower) {
            st.consumed = i + 1;
            continue;
        }
        double w = s.eff_opacity * std::exp(power);
        if (w > kWeightMax) w = kWeightMax;
        const double t_new = st.t * (1.0 - w);
        if (t_new < kTransmittanceStop) break; // drop this splat and stop
        const double wt = w * st.t;
        st.color += s.color * wt;
        st.alpha += wt;
        st.depth_num += wt * s.depth;
        st.normal += s.normal_cam * wt;
        st.t = t_new;
        st.consumed = i + 1;
    }
    return st;
}

void store_pixel(const CompositeState& st, int x, int y, FrameForward& out) {
    RenderBuffers& b = out.buffers;
    b.color.at(x, y, 0) = st.color.x;
    b.color.at(x, y, 1) = st.color.y;
    b.color.at(x, y, 2) = st.color.z;
    b.alpha.at(x, y) = st.alpha;
    const double nn = st.normal.norm();
    out.normal_norm.at(x, y) = nn;
    if (st.alpha > kAlphaGuard) {
        b.depth.at(x, y) = st.depth_num / st.alpha;
        if (nn > 1e-12) {
            b.normal.at(x, y, 0) = st.normal.x / nn;
            b.normal.at(x, y, 1) = st.normal.y / nn;
            b.normal.at(x, y, 2) = st.normal.z / nn;
        }
    }
    out.final_t.at(x, y) = st.t;
    out.n_contrib.at(x, y) = st.consumed;
}

void sort_splats(std::vector<Splat2D>& splats, std::vector<SplatCache>* caches) {
    std::vector<uint32_t> order(splats.size());
    for (uint32_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return splats[a].parent_index < splats[b].parent_index;
    });
    std::vector<Splat2D> sorted;
    sorted.reserve(splats.size());
    for (uint32_t i : order) sorted.push_back(splats[i]);
    splats.swap(sorted);
    if (caches) {
        std::vector<SplatCache> cs;
        cs.reserve(caches->size());
        for (uint32_t i : order) cs.push_back(std::move((*caches)[i]));
        caches->swap(cs);
    }
}

void bin_tiles(const std::vector<Splat2D>& splats, int width, int height, FrameForward& out) {
    out.tiles_x = (width + kTileSize - 1) / kTileSize;
    out.tiles_y = (height + kTileSize - 1) / kTileSize;
    out.tile_lists.assign(static_cast<size_t>(out.tiles_x) * out.tiles_y, {});
    for (uint32_t i = 0; i < splats.size(); ++i) {
        const Splat2D& s = splats[i];
        const double rx = std::sqrt(kCutoffRadius2 * std::max(s.cov2.xx, 0.0));
        const double ry = std::sqrt(kCutoffRadius2 * std::max(s.cov2.yy, 0.0));
        int x0 = std::max(0, static_cast<int>(std::floor(s.mean2.x - rx - 0.5)));
        int x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean2.x + rx - 0.5)));
        int y0 = std::max(0, static_cast<int>(std::floor(s.mean2.y - ry - 0.5)));
        int y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean2.y + ry - 0.5)));
        if (x0 > x1 || y0 > y1) continue;
        for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
            for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx)
                out.tile_lists[static_cast<size_t>(ty) * out.tiles_x + tx].push_back(i);
    }
}

void rasterize_into(FrameForward& out, const Camera& cam, const RenderOptions& opts) {
    const int w = cam.width, h = cam.height;
    out.buffers = RenderBuffers::zeros(w, h);
    out.final_t = Image<double>(w, h, 1, 1.0);
    out.n_contrib = Image<int32_t>(w, h, 1, 0);
    out.normal_norm = Image<double>(w, h, 1, 0.0);
    out.naive = opts.naive;

    if (opts.naive) {
        // Reference path: every splat against every pixel, no tiling.
        parallel_chunks(static_cast<size_t>(h), opts.threads, [&](size_t y0, size_t y1) {
            for (size_t y = y0; y < y1; ++y)
                for (int x = 0; x < w; ++x) {
                    CompositeState st = composite_pixel(
                        x + 0.5, y + 0.5, static_cast<int>(out.splats.size()),
                        [&](int i) -> const Splat2D& { return out.splats[i]; });
                    store_pixel(st, x, static_cast<int>(y), out);
                }
        });
        return;
    }

    bin_tiles(out.splats, w, h, out);
    const size_t n_tiles = out.tile_lists.size();
    parallel_chunks(n_tiles, opts.threads, [&](size_t t0, size_t t1) {
        for (size_t t = t0; t < t1; ++t) {
            const auto& list = out.tile_lists[t];
            const int tx = static_cast<int>(t) % out.tiles_x;
            const int ty = static_cast<int>(t) / out.tiles_x;
            const int x_end = std::min(w, (tx + 1) * kTileSize);
            const int y_end = std::min(h, (ty + 1) * kTileSize);
            for (int y = ty * kTileSize; y < y_end; ++y)
                for (int x = tx * kTileSize; x < x_end; ++x) {
                    CompositeState st = composite_pixel(
                        x + 0.5, y + 0.5, static_cast<int>(list.size()),
                        [&](int i) -> const Splat2D& { return out.splats[list[i]]; });
                    store_pixel(st, x, y, out);
                }
        }
    });
}

}  // namespace

std::optional<Splat2D> project(const ConditionedGaussian3D& cg, const Camera& cam,
                               const Vec3& color, const Vec3& normal_cam,
                               double eff_opacity, SplatCache* cache) {
    const Vec3 p = cam.to_camera(cg.mu3);
    if (!(p.z > cam.near && p.z < cam.far)) return std::nullopt;

    const double inv_z = 1.0 / p.z;
    // Local affine (EWA) approximation of the perspective map at the mean.
    // J = [fx/z, 0, -fx x/z^2; 0, fy/z, -fy y/z^2]
    const double j00 = cam.fx * inv_z;
    const double j02 = -cam.fx * p.x * inv_z * inv_z;
    const double j11 = cam.fy * inv_z;
    const double j12 = -cam.fy * p.y * inv_z * inv_z;

    // A = J * R (2x3), cov2 = A cov3 A^T + dilation
    const Mat3 cov3 = cg.cov3.to_mat();
    double a_row[2][3];
    for (int c = 0; c < 3; ++c) {
        a_row[0][c] = j00 * cam.rotation(0, c) + j02 * cam.rotation(2, c);
        a_row[1][c] = j11 * cam.rotation(1, c) + j12 * cam.rotation(2, c);
    }
    double m[2][3]; // A * cov3
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c)
            m[r][c] = a_row[r][0] * cov3(0, c) + a_row[r][1] * cov3(1, c) + a_row[r][2] * cov3(2, c);
    Sym2 cov2;
    cov2.xx = m[0][0] * a_row[0][0] + m[0][1] * a_row[0][1] + m[0][2] * a_row[0][2] + kAaDilation;
    cov2.xy = m[0][0] * a_row[1][0] + m[0][1] * a_row[1][1] + m[0][2] * a_row[1][2];
    cov2.yy = m[1][0] * a_row[1][0] + m[1][1] * a_row[1][1] + m[1][2] * a_row[1][2] + kAaDilation;

    Splat2D s;
    s.mean2 = {cam.fx * p.x * inv_z + cam.cx, cam.fy * p.y * inv_z + cam.cy};
    const double rx = 3.0 * std::sqrt(cov2.xx);
    const double ry = 3.0 * std::sqrt(cov2.yy);
    if (s.mean2.x + rx < 0 || s.mean2.x - rx > cam.width || s.mean2.y + ry < 0 ||
        s.mean2.y - ry > cam.height)
        return std::nullopt;

    s.cov2 = cov2;
    s.inv_cov2 = cov2.inverse();
    s.depth = p.z;
    s.color = color;
    s.normal_cam = normal_cam;
    s.eff_opacity = eff_opacity;
    s.parent_index = cg.parent_index;
    if (cache) {
        cache->cg = cg;
        cache->cov3 = cov3;
        cache->p_cam = p;
    }
    return s;
}

Vec3 gaussian_normal(const ConditionedGaussian3D& cg, const Camera& cam) {
    SplatCache scratch;
    scratch.cg = cg;
    scratch.cov3 = cg.cov3.to_mat();
    scratch.p_cam = cam.to_camera(cg.mu3);
    scratch.eig = eig_sym3(cg.cov3);

    const Eig3& e = scratch.eig;
    const double spread = std::max({std::abs(e.values.x), std::abs(e.values.z), 1e-30});
    Vec3 n_cam;
    if (e.values.y - e.values.x <= 1e-12 * spread) {
        // smallest eigenvalue not unique: declared convention
        n_cam = -scratch.p_cam.normalized();
    } else {
        Vec3 v{e.vectors(0, 0), e.vectors(1, 0), e.vectors(2, 0)};
        n_cam = cam.rotation * v;
        if (n_cam.dot(scratch.p_cam) > 0) n_cam = -n_cam;
    }
    return n_cam;
}

RenderBuffers rasterize(const std::vector<Splat2D>& splats, const Camera& cam,
                        const RenderOptions& opts) {
    FrameForward fwd;
    fwd.splats = splats;
    sort_splats(fwd.splats, nullptr);
    rasterize_into(fwd, cam, opts);
    return std::move(fwd.buffers);
}

FrameForward render_forward(const GaussianCloud& cloud, const Camera& cam,
                            const RenderOptions& opts) {
    cam.validate();
    const size_t n = cloud.size();
    const Vec3 cam_center = cam.center();

    std::vector<uint8_t> visible(n, 0);
    std::vector<Splat2D> splats(n);
    std::vector<SplatCache> caches(n);

    parallel_chunks(n, opts.threads, [&](size_t i0, size_t i1) {
        for (size_t i = i0; i < i1; ++i) {
            const Gaussian4D& g = cloud.gaussians[i];
            SplatCache cache;
            ConditionedGaussian3D cg =
                condition_at_time(g, cam.time, static_cast<uint32_t>(i), &cache.cond);
            if (cg.temporal_weight < opts.time_cull_threshold) continue;

            cache.cg = cg;
            cache.cov3 = cg.cov3.to_mat();
            cache.eig = eig_sym3(cg.cov3);
            cache.alpha = g.opacity();

            // normal with deterministic tie-break (matches gaussian_normal)
            const Eig3& e = cache.eig;
            const double spread = std::max({std::abs(e.values.x), std::abs(e.values.z), 1e-30});
            Vec3 n_cam;
            Vec3 p_cam_pre = cam.to_camera(cg.mu3);
            if (e.values.y - e.values.x <= 1e-12 * spread) {
                cache.normal_tie = true;
                n_cam = -p_cam_pre.normalized();
            } else {
                Vec3 v{e.vectors(0, 0), e.vectors(1, 0), e.vectors(2, 0)};
                n_cam = cam.rotation * v;
                if (n_cam.dot(p_cam_pre) > 0) {
                    n_cam = -n_cam;
                    cache.normal_sign = -1.0;
                }
            }

            Vec3 to_mu = cg.mu3 - cam_center;
            cache.view_dist = std::max(to_mu.norm(), 1e-9);
            cache.view_dir = to_mu * (1.0 / cache.view_dist);
            Vec3 color = eval_color(cloud.appearance, g.sh, cam.time, cache.view_dir,
                                    opts.active_sh_degree);

            double eff = cache.alpha * cg.temporal_weight;
            auto splat = project(cg, cam, color, n_cam, eff, nullptr);
            if (!splat) continue;
            cache.p_cam = p_cam_pre;
            splats[i] = *splat;
            caches[i] = cache;
            visible[i] = 1;
        }
    });

    FrameForward out;
    out.splats.reserve(n);
    out.caches.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (!visible[i]) continue;
        out.splats.push_back(splats[i]);
        out.caches.push_back(std::move(caches[i]));
    }
    sort_splats(out.splats, &out.caches);
    rasterize_into(out, cam, opts);
    return out;
}

RenderBuffers render(const GaussianCloud& cloud, const Camera& cam, const RenderOptions& opts) {
    return std::move(render_forward(cloud, cam, opts).buffers);
}

std::vector<SplatGrad> rasterize_backward(const FrameForward& fwd, const ImageF& d_color,
                                          const ImageF& d_alpha, const ImageF& d_depth,
                                          const ImageF& d_normal, int threads) {
    const int w = fwd.buffers.alpha.width, h = fwd.buffers.alpha.height;
    std::vector<SplatGrad> grads(fwd.splats.size());
    if (fwd.splats.empty()) return grads;

    const size_t n_tiles = fwd.naive ? 1 : fwd.tile_lists.size();
    // Per-tile scratch, merged in tile order afterwards: gradient sums are
    // independent of the thread count.
    std::vector<std::vector<SplatGrad>> tile_grads(n_tiles);

    struct Hit {
        uint32_t pos; // index into the candidate list
        double w;
        double t;     // transmittance before this splat
        double falloff;
        double dx, dy;
        bool clamped;
    };

    auto process_pixel = [&](int x, int y, const uint32_t* list, int list_len,
                             std::vector<Hit>& hits, std::vector<SplatGrad>& scratch) {
        Vec3 g_c{d_color.at(x, y, 0), d_color.at(x, y, 1), d_color.at(x, y, 2)};
        double g_a = d_alpha.empty() ? 0.0 : d_alpha.at(x, y);
        double g_num = 0.0;
        const double alpha = fwd.buffers.alpha.at(x, y);
        if (!d_depth.empty() && alpha > kAlphaGuard) {
            const double gd = d_depth.at(x, y);
            g_num = gd / alpha;
            g_a += -gd * fwd.buffers.depth.at(x, y) / alpha;
        }
        Vec3 g_nraw{0, 0, 0};
        const double nn = fwd.normal_norm.at(x, y);
        if (!d_normal.empty() && alpha > kAlphaGuard && nn > 1e-12) {
            Vec3 gn{d_normal.at(x, y, 0), d_normal.at(x, y, 1), d_normal.at(x, y, 2)};
            Vec3 nhat{fwd.buffers.normal.at(x, y, 0), fwd.buffers.normal.at(x, y, 1),
                      fwd.buffers.normal.at(x, y, 2)};
            g_nraw = (gn - nhat * nhat.dot(gn)) * (1.0 / nn);
        }
        if (g_c.x == 0 && g_c.y == 0 && g_c.z == 0 && g_a == 0 && g_num == 0 &&
            g_nraw.x == 0 && g_nraw.y == 0 && g_nraw.z == 0)
            return;

        // Replay the forward walk over the candidates this pixel consumed.
        const double px = x + 0.5, py = y + 0.5;
        const int consumed = std::min<int>(fwd.n_contrib.at(x, y), list_len);
        hits.clear();
        double t = 1.0;
        for (int i = 0; i < consumed; ++i) {
            const Splat2D& s = fwd.splats[list ? list[i] : static_cast<uint32_t>(i)];
            const double dx = px - s.mean2.x;
            const double dy = py - s.mean2.y;
            const double power = -0.5 * (s.inv_cov2.xx * dx * dx + s.inv_cov2.yy * dy * dy) -
                                 s.inv_cov2.xy * dx * dy;
            if (power < kMinPower) continue;
            const double falloff = std::exp(power);
            double wgt = s.eff_opacity * falloff;
            const bool clamped = wgt > kWeightMax;
            if (clamped) wgt = kWeightMax;
            hits.push_back({static_cast<uint32_t>(i), wgt, t, falloff, dx, dy, clamped});
            t *= (1.0 - wgt);
        }

        Vec3 s_c{0, 0, 0}, s_n{0, 0, 0};
        double s_a = 0, s_d = 0;
        for (size_t j = hits.size(); j-- > 0;) {
            const Hit& hit = hits[j];
            const uint32_t si = list ? list[hit.pos] : hit.pos;
            const Splat2D& s = fwd.splats[si];
            SplatGrad& sg = scratch[list ? hit.pos : si];

            const double wt = hit.w * hit.t;
            sg.d_color += g_c * wt;
            sg.d_depth += g_num * wt;
            sg.d_normal += g_nraw * wt;

            const double payload = g_c.dot(s.color) + g_a + g_num * s.depth +
                                   g_nraw.dot(s.normal_cam);
            const double suffix = g_c.dot(s_c) + g_a * s_a + g_num * s_d + g_nraw.dot(s_n);
            const double d_w = hit.t * payload - suffix / (1.0 - hit.w);

            if (!hit.clamped) {
                sg.d_alpha_eff += hit.falloff * d_w;
                const double d_power = s.eff_opacity * hit.falloff * d_w;
                sg.d_mean2.x += d_power * (s.inv_cov2.xx * hit.dx + s.inv_cov2.xy * hit.dy);
                sg.d_mean2.y += d_power * (s.inv_cov2.yy * hit.dy + s.inv_cov2.xy * hit.dx);
                sg.d_conic_xx += d_power * (-0.5 * hit.dx * hit.dx);
                sg.d_conic_xy += d_power * (-0.5 * hit.dx * hit.dy);
                sg.d_conic_yy += d_power * (-0.5 * hit.dy * hit.dy);
            }

            s_c += s.color * wt;
            s_a += wt;
            s_d += wt * s.depth;
            s_n += s.normal_cam * wt;
        }
    };

    if (fwd.naive) {
        tile_grads[0].assign(fwd.splats.size(), {});
        std::vector<Hit> hits;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                process_pixel(x, y, nullptr, static_cast<int>(fwd.splats.size()), hits,
                              tile_grads[0]);
        return tile_grads[0];
    }

    parallel_chunks(n_tiles, threads, [&](size_t t0, size_t t1) {
        std::vector<Hit> hits;
        for (size_t t = t0; t < t1; ++t) {
            const auto& list = fwd.tile_lists[t];
            tile_grads[t].assign(list.size(), {});
            if (list.empty()) continue;
            const int tx = static_cast<int>(t) % fwd.tiles_x;
            const int ty = static_cast<int>(t) / fwd.tiles_x;
            const int x_end = std::min(w, (tx + 1) * kTileSize);
            const int y_end = std::min(h, (ty + 1) * kTileSize);
            for (int y = ty * kTileSize; y < y_end; ++y)
                for (int x = tx * kTileSize; x < x_end; ++x)
                    process_pixel(x, y, list.data(), static_cast<int>(list.size()), hits,
                                  tile_grads[t]);
        }
    });

    // Deterministic merge in tile order.
    for (size_t t = 0; t < n_tiles; ++t) {
        const auto& list = fwd.tile_lists[t];
        for (size_t j = 0; j < list.size(); ++j) {
            const SplatGrad& src = tile_grads[t][j];
            SplatGrad& dst = grads[list[j]];
            dst.d_mean2 = dst.d_mean2 + src.d_mean2;
            dst.d_conic_xx += src.d_conic_xx;
            dst.d_conic_xy += src.d_conic_xy;
            dst.d_conic_yy += src.d_conic_yy;
            dst.d_alpha_eff += src.d_alpha_eff;
            dst.d_color += src.d_color;
            dst.d_depth += src.d_depth;
            dst.d_normal += src.d_normal;
        }
    }
    return grads;
}

}  // namespace sp4d
