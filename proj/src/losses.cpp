#include "sp4d/losses.hpp"

#include <cmath>
#include <functional>
#include <stdexcept>

#include "sp4d/metrics.hpp"
#include "sp4d/parallel.hpp"

namespace sp4d {

void LossWeights::validate() const {
    auto ok = [](double v) { return std::isfinite(v) && v >= 0; };
    if (!ok(lambda_ssim) || !ok(lambda_enac) || !ok(lambda_depth) || !ok(eps_alpha))
        throw std::invalid_argument("loss weights must be finite and nonnegative");
}

GradientBuffer GradientBuffer::zeros(const GaussianCloud& cloud) {
    GradientBuffer g;
    g.count = cloud.size();
    g.coeffs = cloud.appearance.coeff_count() * 3;
    g.bands = cloud.appearance.temporal_bands;
    g.mu.assign(g.count * 4, 0.0);
    g.rotor.assign(g.count * 8, 0.0);
    g.log_s.assign(g.count * 4, 0.0);
    g.opacity.assign(g.count, 0.0);
    g.sh.assign(g.count * g.coeffs, 0.0);
    g.phases.assign(g.count * g.bands, 0.0);
    return g;
}

void GradientBuffer::set_zero() {
    auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    zero(mu);
    zero(rotor);
    zero(log_s);
    zero(opacity);
    zero(sh);
    zero(phases);
}

void GradientBuffer::check_finite() const {
    auto scan = [&](const std::vector<double>& v, size_t stride, const char* what) {
        for (size_t i = 0; i < v.size(); ++i)
            if (!std::isfinite(v[i]))
                throw std::runtime_error("backward: non-finite " + std::string(what) +
                                         " gradient for gaussian " + std::to_string(i / stride));
    };
    scan(mu, 4, "mu");
    scan(rotor, 8, "rotor");
    scan(log_s, 4, "scale");
    scan(opacity, 1, "opacity");
    if (coeffs) scan(sh, coeffs, "sh");
    if (bands) scan(phases, bands, "phase");
}

void normals_from_depth(const ImageF& depth, const Camera& cam, ImageF& normals,
                        Image<uint8_t>& valid) {
    const int w = depth.width, h = depth.height;
    normals = ImageF(w, h, 3, 0.0);
    valid = Image<uint8_t>(w, h, 1, 0);
    auto ray = [&](int u, int v) {
        return Vec3{(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0};
    };
    for (int v = 1; v < h - 1; ++v)
        for (int u = 1; u < w - 1; ++u) {
            const double d0 = depth.at(u, v);
            const double dr = depth.at(u + 1, v), dl = depth.at(u - 1, v);
            const double dd = depth.at(u, v + 1), du = depth.at(u, v - 1);
            if (d0 <= 0 || dr <= 0 || dl <= 0 || dd <= 0 || du <= 0) continue;
            const Vec3 a = ray(u + 1, v) * dr - ray(u - 1, v) * dl;
            const Vec3 b = ray(u, v + 1) * dd - ray(u, v - 1) * du;
            Vec3 n = a.cross(b);
            const double nn = n.norm();
            if (nn < 1e-18) continue;
            n = n * (1.0 / nn);
            if (n.dot(ray(u, v)) > 0) n = -n; // face the camera
            normals.at(u, v, 0) = n.x;
            normals.at(u, v, 1) = n.y;
            normals.at(u, v, 2) = n.z;
            valid.at(u, v) = 1;
        }
}

void normals_from_depth_backward(const ImageF& depth, const Camera& cam, const ImageF&,
                                 const Image<uint8_t>& valid, const ImageF& d_normals,
                                 ImageF& d_depth) {
    const int w = depth.width, h = depth.height;
    if (d_depth.empty()) d_depth = ImageF(w, h, 1, 0.0);
    auto ray = [&](int u, int v) {
        return Vec3{(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0};
    };
    for (int v = 1; v < h - 1; ++v)
        for (int u = 1; u < w - 1; ++u) {
            if (!valid.at(u, v)) continue;
            Vec3 g{d_normals.at(u, v, 0), d_normals.at(u, v, 1), d_normals.at(u, v, 2)};
            if (g.x == 0 && g.y == 0 && g.z == 0) continue;
            const double dr = depth.at(u + 1, v), dl = depth.at(u - 1, v);
            const double dd = depth.at(u, v + 1), du = depth.at(u, v - 1);
            const Vec3 a = ray(u + 1, v) * dr - ray(u - 1, v) * dl;
            const Vec3 b = ray(u, v + 1) * dd - ray(u, v - 1) * du;
            Vec3 n = a.cross(b);
            const double nn = n.norm();
            Vec3 uhat = n * (1.0 / nn);
            const double sign = uhat.dot(ray(u, v)) > 0 ? -1.0 : 1.0;
            Vec3 gu = g * sign;
            Vec3 graw = (gu - uhat * uhat.dot(gu)) * (1.0 / nn);
            Vec3 ga = b.cross(graw);
            Vec3 gb = graw.cross(a);
            d_depth.at(u + 1, v) += ga.dot(ray(u + 1, v));
            d_depth.at(u - 1, v) -= ga.dot(ray(u - 1, v));
            d_depth.at(u, v + 1) += gb.dot(ray(u, v + 1));
            d_depth.at(u, v - 1) -= gb.dot(ray(u, v - 1));
        }
}

double enac_loss(const ImageF& n_depth, const ImageF& n_gauss, const Image<uint8_t>& mask) {
    if (n_depth.width != n_gauss.width || n_depth.height != n_gauss.height)
        throw std::invalid_argument("enac_loss: shape mismatch");
    double acc = 0;
    size_t n = 0;
    for (int y = 0; y < n_depth.height; ++y)
        for (int x = 0; x < n_depth.width; ++x) {
            if (!mask.at(x, y)) continue;
            for (int c = 0; c < 3; ++c) acc += std::abs(n_depth.at(x, y, c) - n_gauss.at(x, y, c));
            ++n;
        }
    return n ? acc / static_cast<double>(n) : 0.0;
}

namespace {

struct BufferGrads {
    ImageF color, alpha, depth, normal;
};

int sign_of(double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

// Shared forward (and optional gradient) of the loss composition over
// already-rendered buffers.
LossBreakdown compute_losses(const RenderBuffers& b, const Image<double>* normal_norm,
                             const Camera& cam, const FrameTargets& t, const LossWeights& w,
                             bool with_enac, BufferGrads* bg) {
    w.validate();
    const int iw = b.color.width, ih = b.color.height;
    if (t.rgb.width != iw || t.rgb.height != ih || t.rgb.channels != 3)
        throw std::invalid_argument("render_loss: target shape mismatch");
    if (!t.tool_mask.empty() && (t.tool_mask.width != iw || t.tool_mask.height != ih))
        throw std::invalid_argument("render_loss: tool mask shape mismatch");
    if (!t.depth.empty() && (t.depth.width != iw || t.depth.height != ih))
        throw std::invalid_argument("render_loss: target depth shape mismatch");

    Image<uint8_t> include(iw, ih, 1, 1);
    if (!t.tool_mask.empty())
        for (int y = 0; y < ih; ++y)
            for (int x = 0; x < iw; ++x) include.at(x, y) = t.tool_mask.at(x, y) ? 0 : 1;

    size_t n_inc = 0;
    for (int y = 0; y < ih; ++y)
        for (int x = 0; x < iw; ++x)
            if (include.at(x, y)) ++n_inc;

    if (bg) {
        bg->color = ImageF(iw, ih, 3, 0.0);
        bg->depth = ImageF(iw, ih, 1, 0.0);
        bg->normal = ImageF(iw, ih, 3, 0.0);
    }

    LossBreakdown out;

    // color L1
    if (n_inc) {
        double acc = 0;
        const double scale = 1.0 / (3.0 * static_cast<double>(n_inc));
        for (int y = 0; y < ih; ++y)
            for (int x = 0; x < iw; ++x) {
                if (!include.at(x, y)) continue;
                for (int c = 0; c < 3; ++c) {
                    const double d = b.color.at(x, y, c) - t.rgb.at(x, y, c);
                    acc += std::abs(d);
                    if (bg) bg->color.at(x, y, c) += (1.0 - w.lambda_ssim) * sign_of(d) * scale;
                }
            }
        out.l1 = acc * scale;
    }

    // D-SSIM
    if (bg && w.lambda_ssim > 0) {
        ImageF dssim;
        out.ssim = ssim_with_grad(b.color, t.rgb, &include, dssim);
        for (size_t i = 0; i < dssim.data.size(); ++i)
            bg->color.data[i] += -w.lambda_ssim * dssim.data[i];
    } else {
        out.ssim = ssim(b.color, t.rgb, &include);
    }

    // depth L1 over valid target depths
    if (w.lambda_depth > 0 && !t.depth.empty()) {
        size_t n_valid = 0;
        for (int y = 0; y < ih; ++y)
            for (int x = 0; x < iw; ++x)
                if (include.at(x, y) && t.depth.at(x, y) > 0) ++n_valid;
        if (n_valid) {
            double acc = 0;
            const double scale = 1.0 / static_cast<double>(n_valid);
            for (int y = 0; y < ih; ++y)
                for (int x = 0; x < iw; ++x) {
                    if (!include.at(x, y) || !(t.depth.at(x, y) > 0)) continue;
                    const double d = b.depth.at(x, y) - t.depth.at(x, y);
                    acc += std::abs(d);
                    if (bg) bg->depth.at(x, y) += w.lambda_depth * sign_of(d) * scale;
                }
            out.depth_l1 = acc * scale;
        }
    }

    // normal alignment
    if (with_enac && w.lambda_enac > 0) {
        ImageF nd;
        Image<uint8_t> nd_valid;
        normals_from_depth(b.depth, cam, nd, nd_valid);
        Image<uint8_t> mask(iw, ih, 1, 0);
        size_t n_mask = 0;
        for (int y = 0; y < ih; ++y)
            for (int x = 0; x < iw; ++x) {
                if (!nd_valid.at(x, y) || !include.at(x, y)) continue;
                if (!(b.alpha.at(x, y) > w.eps_alpha)) continue;
                if (normal_norm && !((*normal_norm).at(x, y) > 1e-12)) continue;
                mask.at(x, y) = 1;
                ++n_mask;
            }
        out.enac = enac_loss(nd, b.normal, mask);
        if (bg && n_mask) {
            const double scale = w.lambda_enac / static_cast<double>(n_mask);
            ImageF d_nd(iw, ih, 3, 0.0);
            for (int y = 0; y < ih; ++y)
                for (int x = 0; x < iw; ++x) {
                    if (!mask.at(x, y)) continue;
                    for (int c = 0; c < 3; ++c) {
                        const int s = sign_of(nd.at(x, y, c) - b.normal.at(x, y, c));
                        bg->normal.at(x, y, c) += -s * scale;
                        d_nd.at(x, y, c) = s * scale;
                    }
                }
            if (!w.enac_detach_depth)
                normals_from_depth_backward(b.depth, cam, nd, nd_valid, d_nd, bg->depth);
        }
    }

    out.total = (1.0 - w.lambda_ssim) * out.l1 + w.lambda_ssim * (1.0 - out.ssim) +
                w.lambda_depth * out.depth_l1 + w.lambda_enac * out.enac;
    return out;
}

// Chains one splat's rasterizer gradients down to its Gaussian's parameters.
void splat_chain(const GaussianCloud& cloud, const Camera& cam, const FrameForward& fwd,
                 size_t si, const SplatGrad& sg, const RenderOptions& opts,
                 GradientBuffer& out) {
    const SplatCache& cache = fwd.caches[si];
    const Splat2D& s = fwd.splats[si];
    const size_t gi = cache.cg.parent_index;
    const Gaussian4D& g = cloud.gaussians[gi];

    Vec3 d_pc{0, 0, 0};
    Mat3 d_cov3;

    // conic -> cov2: Lambda = cov2^-1, dCov2 = -Lambda dLambda Lambda
    {
        const double l00 = s.inv_cov2.xx, l01 = s.inv_cov2.xy, l11 = s.inv_cov2.yy;
        const double d00 = sg.d_conic_xx, d01 = sg.d_conic_xy, d11 = sg.d_conic_yy;
        // M = Lambda * dLambda
        const double m00 = l00 * d00 + l01 * d01;
        const double m01 = l00 * d01 + l01 * d11;
        const double m10 = l01 * d00 + l11 * d01;
        const double m11 = l01 * d01 + l11 * d11;
        double dc2[2][2];
        dc2[0][0] = -(m00 * l00 + m01 * l01);
        dc2[0][1] = -(m00 * l01 + m01 * l11);
        dc2[1][0] = -(m10 * l00 + m11 * l01);
        dc2[1][1] = -(m10 * l01 + m11 * l11);

        // cov2 = A cov3 A^T + kappa I, A = J R
        const Vec3 p = cache.p_cam;
        const double iz = 1.0 / p.z;
        const double j00 = cam.fx * iz;
        const double j02 = -cam.fx * p.x * iz * iz;
        const double j11 = cam.fy * iz;
        const double j12 = -cam.fy * p.y * iz * iz;
        double a[2][3];
        for (int c = 0; c < 3; ++c) {
            a[0][c] = j00 * cam.rotation(0, c) + j02 * cam.rotation(2, c);
            a[1][c] = j11 * cam.rotation(1, c) + j12 * cam.rotation(2, c);
        }
        // d_cov3 += A^T dc2 A
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double acc = 0;
                for (int r = 0; r < 2; ++r)
                    for (int c = 0; c < 2; ++c) acc += a[r][i] * dc2[r][c] * a[c][j];
                d_cov3(i, j) += acc;
            }
        // dA = 2 dc2 A cov3
        double ac[2][3]; // A cov3
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c)
                ac[r][c] = a[r][0] * cache.cov3(0, c) + a[r][1] * cache.cov3(1, c) +
                           a[r][2] * cache.cov3(2, c);
        double da[2][3];
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c)
                da[r][c] = 2.0 * (dc2[r][0] * ac[0][c] + dc2[r][1] * ac[1][c]);
        // dJ = dA R^T (A = J R); only the nonzero J entries matter below
        double dj[2][3];
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int k = 0; k < 3; ++k) acc += da[r][k] * cam.rotation(c, k);
                dj[r][c] = acc;
            }
        const double iz2 = iz * iz, iz3 = iz2 * iz;
        d_pc.x += dj[0][2] * (-cam.fx * iz2);
        d_pc.y += dj[1][2] * (-cam.fy * iz2);
        d_pc.z += dj[0][0] * (-cam.fx * iz2) + dj[0][2] * (2.0 * cam.fx * p.x * iz3) +
                  dj[1][1] * (-cam.fy * iz2) + dj[1][2] * (2.0 * cam.fy * p.y * iz3);

        // mean2 = (fx x/z + cx, fy y/z + cy)
        d_pc.x += sg.d_mean2.x * cam.fx * iz;
        d_pc.z += -sg.d_mean2.x * cam.fx * p.x * iz2;
        d_pc.y += sg.d_mean2.y * cam.fy * iz;
        d_pc.z += -sg.d_mean2.y * cam.fy * p.y * iz2;

        // camera-z payload
        d_pc.z += sg.d_depth;
    }

    // p_cam = R mu3 + t
    Vec3 d_mu3 = cam.rotation.transposed() * d_pc;

    // color via the per-splat view direction
    {
        Vec3 d_dir{0, 0, 0};
        eval_color_backward(cloud.appearance, g.sh, cam.time, cache.view_dir,
                            opts.active_sh_degree, sg.d_color,
                            out.sh.data() + gi * static_cast<size_t>(out.coeffs),
                            out.phases.data() + gi * static_cast<size_t>(out.bands), d_dir);
        const Vec3 dir = cache.view_dir;
        d_mu3 += (d_dir - dir * dir.dot(d_dir)) * (1.0 / cache.view_dist);
    }

    // composited normal -> smallest eigenvector of cov3
    if (!cache.normal_tie &&
        (sg.d_normal.x != 0 || sg.d_normal.y != 0 || sg.d_normal.z != 0)) {
        Vec3 dv = (cam.rotation.transposed() * sg.d_normal) * cache.normal_sign;
        const Eig3& e = cache.eig;
        const Vec3 v0{e.vectors(0, 0), e.vectors(1, 0), e.vectors(2, 0)};
        for (int k = 1; k < 3; ++k) {
            const Vec3 vk{e.vectors(0, k), e.vectors(1, k), e.vectors(2, k)};
            const double ck = dv.dot(vk) / (e.values[0] - e.values[k]);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) d_cov3(i, j) += ck * vk[i] * v0[j];
        }
    }

    // effective opacity = sigmoid(logit) * temporal weight
    const double alpha = cache.alpha;
    const double rho = cache.cg.temporal_weight;
    out.opacity[gi] += alpha * (1.0 - alpha) * rho * sg.d_alpha_eff;
    const double d_rho = alpha * sg.d_alpha_eff;

    Vec4 d_mu4{0, 0, 0, 0};
    Mat4 d_cov4;
    condition_backward(cache.cg, cache.cond, d_mu3, d_cov3, d_rho, d_mu4, d_cov4);

    Quat d_ql{0, 0, 0, 0}, d_qr{0, 0, 0, 0};
    Vec4 d_ls{0, 0, 0, 0};
    build_cov4_backward(g.rotor, g.scales, d_cov4, d_ql, d_qr, d_ls);

    for (int i = 0; i < 4; ++i) {
        out.mu[gi * 4 + i] += d_mu4[i];
        out.rotor[gi * 8 + i] += d_ql[i];
        out.rotor[gi * 8 + 4 + i] += d_qr[i];
        out.log_s[gi * 4 + i] += d_ls[i];
    }
}

}  // namespace

double render_loss(const RenderBuffers& rendered, const FrameTargets& targets,
                   const LossWeights& weights, LossBreakdown* breakdown) {
    Camera dummy; // ENAC disabled: camera not consulted
    LossBreakdown b =
        compute_losses(rendered, nullptr, dummy, targets, weights, /*with_enac=*/false, nullptr);
    if (breakdown) *breakdown = b;
    return b.total;
}

LossBreakdown loss_forward(const GaussianCloud& cloud, const Camera& cam,
                           const FrameTargets& targets, const LossWeights& weights,
                           const RenderOptions& opts) {
    FrameForward fwd = render_forward(cloud, cam, opts);
    return compute_losses(fwd.buffers, &fwd.normal_norm, cam, targets, weights, true, nullptr);
}

BackwardResult backward(const GaussianCloud& cloud, const Camera& cam,
                        const FrameTargets& targets, const LossWeights& weights,
                        const RenderOptions& opts) {
    FrameForward fwd = render_forward(cloud, cam, opts);

    BufferGrads bg;
    BackwardResult result;
    result.loss = compute_losses(fwd.buffers, &fwd.normal_norm, cam, targets, weights, true, &bg);

    std::vector<SplatGrad> sg = rasterize_backward(fwd, bg.color, ImageF{}, bg.depth,
                                                   bg.normal, opts.threads);

    result.grads = GradientBuffer::zeros(cloud);
    result.screen_grad_norm.assign(cloud.size(), 0.0);
    result.visible.assign(cloud.size(), 0);

    GradientBuffer& grads = result.grads;
    parallel_chunks(fwd.splats.size(), opts.threads, [&](size_t i0, size_t i1) {
        for (size_t i = i0; i < i1; ++i) {
            splat_chain(cloud, cam, fwd, i, sg[i], opts, grads);
            const size_t gi = fwd.caches[i].cg.parent_index;
            result.screen_grad_norm[gi] = sg[i].d_mean2.norm();
            result.visible[gi] = 1;
        }
    });

    grads.check_finite();
    return result;
}

GradCheckReport check_gradients(GaussianCloud cloud, const Camera& cam,
                                const FrameTargets& targets, const LossWeights& weights,
                                double h, const RenderOptions& opts, int corrupt_group) {
    BackwardResult analytic = backward(cloud, cam, targets, weights, opts);

    struct Group {
        const char* name;
        int comps;
        std::function<double*(Gaussian4D&, int)> param;
        std::function<double(const GradientBuffer&, size_t, int)> grad;
    };
    const int coeffs = cloud.appearance.coeff_count() * 3;
    const int bands = cloud.appearance.temporal_bands;
    std::vector<Group> groups = {
        {"mu", 4, [](Gaussian4D& g, int c) { return &g.mu[c]; },
         [](const GradientBuffer& b, size_t i, int c) { return b.mu[i * 4 + c]; }},
        {"rotor", 8,
         [](Gaussian4D& g, int c) {
             return c < 4 ? &g.rotor.q_left[c] : &g.rotor.q_right[c - 4];
         },
         [](const GradientBuffer& b, size_t i, int c) { return b.rotor[i * 8 + c]; }},
        {"scales", 4, [](Gaussian4D& g, int c) { return &g.scales.log_s[c]; },
         [](const GradientBuffer& b, size_t i, int c) { return b.log_s[i * 4 + c]; }},
        {"opacity", 1, [](Gaussian4D& g, int) { return &g.opacity_logit; },
         [](const GradientBuffer& b, size_t i, int) { return b.opacity[i]; }},
        {"sh", coeffs, [](Gaussian4D& g, int c) { return &g.sh.k[c]; },
         [coeffs](const GradientBuffer& b, size_t i, int c) { return b.sh[i * coeffs + c]; }},
        {"phases", bands, [](Gaussian4D& g, int c) { return &g.sh.phases[c]; },
         [bands](const GradientBuffer& b, size_t i, int c) { return b.phases[i * bands + c]; }},
    };

    GradCheckReport report;
    for (size_t gidx = 0; gidx < groups.size(); ++gidx) {
        const Group& grp = groups[gidx];
        GradCheckGroup rep;
        rep.name = grp.name;
        for (size_t i = 0; i < cloud.size(); ++i) {
            for (int c = 0; c < grp.comps; ++c) {
                double* p = grp.param(cloud.gaussians[i], c);
                const double orig = *p;
                *p = orig + h;
                const double lp = loss_forward(cloud, cam, targets, weights, opts).total;
                *p = orig - h;
                const double lm = loss_forward(cloud, cam, targets, weights, opts).total;
                *p = orig;
                const double fd = (lp - lm) / (2.0 * h);
                double an = grp.grad(analytic.grads, i, c);
                if (static_cast<int>(gidx) == corrupt_group && i == 0 && c == 0) an += 0.1;
                // 1e-3 relative gate with a 1e-7 absolute floor
                const double rel =
                    std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4});
                if (rel > rep.max_rel_err) {
                    rep.max_rel_err = rel;
                    rep.argmax_gaussian = i;
                    rep.argmax_component = c;
                }
            }
        }
        report.groups.push_back(rep);
    }
    return report;
}

}  // namespace sp4d
