#include "sp4d/gaussian.hpp"

#include <stdexcept>

namespace sp4d {

ConditionedGaussian3D condition_at_time(const Gaussian4D& g, double t,
                                        uint32_t parent_index, ConditionCache* cache) {
    Mat4 cov = g.cov4().to_mat();
    const double stt = cov(3, 3); // >= kCovEps by construction
    const Vec3 sxt{cov(0, 3), cov(1, 3), cov(2, 3)};
    const Vec3 k = sxt * (1.0 / stt);
    const double dt = t - g.mu.w;

    ConditionedGaussian3D out;
    out.parent_index = parent_index;
    out.mu3 = g.mu.xyz() + k * dt;

    Mat3 c3;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c3(i, j) = cov(i, j) - sxt[i] * sxt[j] / stt;
    for (int i = 0; i < 3; ++i) c3(i, i) = std::max(c3(i, i), kCovEps);
    out.cov3 = Sym3::from_mat(c3);

    out.temporal_weight = std::exp(-dt * dt / (2.0 * stt));

    if (cache) {
        cache->cov4 = cov;
        cache->k = k;
        cache->sigma_tt = stt;
        cache->dt = dt;
    }
    return out;
}

double effective_opacity(const Gaussian4D& g, double t) {
    return g.opacity() * condition_at_time(g, t).temporal_weight;
}

std::vector<uint32_t> cull_by_time(const GaussianCloud& cloud, double t, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("cull_by_time: threshold must be in (0, 1)");
    // temporal_weight >= thr  <=>  dt^2 <= -2 Sigma_tt ln(thr)
    const double log_thr = std::log(threshold);
    std::vector<uint32_t> keep;
    keep.reserve(cloud.size());
    for (uint32_t i = 0; i < cloud.size(); ++i) {
        const Gaussian4D& g = cloud.gaussians[i];
        Sym4 cov = g.cov4();
        const double stt = cov[9];
        const double dt = t - g.mu.w;
        if (dt * dt <= -2.0 * stt * log_thr) keep.push_back(i);
    }
    return keep;
}

void condition_backward(const ConditionedGaussian3D& cg, const ConditionCache& cache,
                        const Vec3& d_mu3, const Mat3& d_cov3, double d_weight,
                        Vec4& d_mu, Mat4& d_cov4) {
    const double stt = cache.sigma_tt;
    const double dt = cache.dt;
    const Vec3 sxt{cache.cov4(0, 3), cache.cov4(1, 3), cache.cov4(2, 3)};

    // mu3 = mu_xyz + sxt * dt / stt
    d_mu.x += d_mu3.x;
    d_mu.y += d_mu3.y;
    d_mu.z += d_mu3.z;
    const double gk = d_mu3.dot(cache.k); // d_mu3 . (sxt/stt)
    d_mu.w += -gk;
    for (int i = 0; i < 3; ++i) d_cov4(i, 3) += d_mu3[i] * dt / stt;
    d_cov4(3, 3) += -gk * dt / stt;

    // cov3 = Sigma_xx - sxt sxt^T / stt
    double quad = 0; // sxt^T d_cov3 sxt
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            d_cov4(i, j) += d_cov3(i, j);
            quad += sxt[i] * d_cov3(i, j) * sxt[j];
        }
    for (int i = 0; i < 3; ++i) {
        double gsym = 0;
        for (int j = 0; j < 3; ++j) gsym += (d_cov3(i, j) + d_cov3(j, i)) * sxt[j];
        d_cov4(i, 3) += -gsym / stt;
    }
    d_cov4(3, 3) += quad / (stt * stt);

    // temporal_weight = exp(-dt^2 / (2 stt))
    const double w = cg.temporal_weight;
    d_mu.w += d_weight * w * dt / stt;
    d_cov4(3, 3) += d_weight * w * dt * dt / (2.0 * stt * stt);
}

}  // namespace sp4d
