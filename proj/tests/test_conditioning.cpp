#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "sp4d/eig3.hpp"
#include "sp4d/gaussian.hpp"
#include "test_util.hpp"

using namespace sp4d;

namespace {

Gaussian4D random_gaussian(std::mt19937_64& rng) {
    GaussianCloud c = testing::random_cloud(1, rng());
    return c.gaussians[0];
}

// Unnormalized 4D density at (x, t) by direct 4x4 quadratic form.
double density4(const Gaussian4D& g, const Vec3& x, double t) {
    Mat4 cov = g.cov4().to_mat();
    // solve cov * y = d via Gaussian elimination (small fixed size)
    double a[4][5];
    Vec4 d{x.x - g.mu.x, x.y - g.mu.y, x.z - g.mu.z, t - g.mu.w};
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) a[r][c] = cov(r, c);
        a[r][4] = d[r];
    }
    for (int p = 0; p < 4; ++p) {
        int best = p;
        for (int r = p + 1; r < 4; ++r)
            if (std::abs(a[r][p]) > std::abs(a[best][p])) best = r;
        std::swap(a[p], a[best]);
        for (int r = p + 1; r < 4; ++r) {
            double f = a[r][p] / a[p][p];
            for (int c = p; c < 5; ++c) a[r][c] -= f * a[p][c];
        }
    }
    Vec4 y;
    for (int r = 3; r >= 0; --r) {
        double acc = a[r][4];
        for (int c = r + 1; c < 4; ++c) acc -= a[r][c] * y[c];
        y[r] = acc / a[r][r];
    }
    return std::exp(-0.5 * d.dot(y));
}

// Unnormalized conditioned 3D density.
double density3(const ConditionedGaussian3D& cg, const Vec3& x) {
    Mat3 cov = cg.cov3.to_mat();
    Vec3 d = x - cg.mu3;
    double a[3][4];
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) a[r][c] = cov(r, c);
        a[r][3] = d[r];
    }
    for (int p = 0; p < 3; ++p) {
        int best = p;
        for (int r = p + 1; r < 3; ++r)
            if (std::abs(a[r][p]) > std::abs(a[best][p])) best = r;
        std::swap(a[p], a[best]);
        for (int r = p + 1; r < 3; ++r) {
            double f = a[r][p] / a[p][p];
            for (int c = p; c < 4; ++c) a[r][c] -= f * a[p][c];
        }
    }
    Vec3 y;
    for (int r = 2; r >= 0; --r) {
        double acc = a[r][3];
        for (int c = r + 1; c < 3; ++c) acc -= a[r][c] * y[c];
        y[r] = acc / a[r][r];
    }
    return std::exp(-0.5 * d.dot(y));
}

}  // namespace

TEST_CASE("diagonal covariance: conditioning is a pass-through") {
    Gaussian4D g;
    g.mu = {0.3, -0.2, 1.1, 0.4};
    g.scales.log_s = {std::log(0.5), std::log(0.7), std::log(0.9), std::log(0.3)};
    g.sh = AppearanceCoeffs::zeros(AppearanceConfig{});
    const double t = 0.7;
    ConditionedGaussian3D cg = condition_at_time(g, t);
    CHECK(cg.mu3.x == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(cg.mu3.y == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(cg.mu3.z == doctest::Approx(1.1).epsilon(1e-12));
    Mat3 c3 = cg.cov3.to_mat();
    CHECK(c3(0, 0) == doctest::Approx(0.25).epsilon(1e-8));
    CHECK(c3(1, 1) == doctest::Approx(0.49).epsilon(1e-8));
    CHECK(c3(2, 2) == doctest::Approx(0.81).epsilon(1e-8));
    const double stt = 0.09 + kCovEps;
    CHECK(cg.temporal_weight ==
          doctest::Approx(std::exp(-sqr(t - 0.4) / (2 * stt))).epsilon(1e-12));
}

TEST_CASE("temporal weight is exactly one at the mean time") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        Gaussian4D g = random_gaussian(rng);
        ConditionedGaussian3D cg = condition_at_time(g, g.mu.w);
        CHECK(cg.temporal_weight == 1.0);
    }
}

TEST_CASE("temporal weight is symmetric about the mean and maximal there") {
    std::mt19937_64 rng(4);
    Gaussian4D g = random_gaussian(rng);
    for (double dt : {0.05, 0.1, 0.3}) {
        const double wp = condition_at_time(g, g.mu.w + dt).temporal_weight;
        const double wm = condition_at_time(g, g.mu.w - dt).temporal_weight;
        CHECK(wp == doctest::Approx(wm).epsilon(1e-12));
        CHECK(wp < 1.0);
    }
}

TEST_CASE("conditioning matches a grid-moment oracle") {
    // fit mean/cov of p(x | t) sampled on a dense grid
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Gaussian4D g = random_gaussian(rng);
        const double t = g.mu.w + 0.2 * (trial % 5 - 2) * 0.1;
        ConditionedGaussian3D cg = condition_at_time(g, t);
        Eig3 eig = eig_sym3(cg.cov3);

        const int n = 41;
        const double half = 5.0;
        // grid aligned with the conditioned principal axes
        Vec3 axes[3];
        double sig[3];
        for (int k = 0; k < 3; ++k) {
            axes[k] = {eig.vectors(0, k), eig.vectors(1, k), eig.vectors(2, k)};
            sig[k] = std::sqrt(std::max(eig.values[k], 0.0));
        }
        double wsum = 0;
        Vec3 mean{0, 0, 0};
        double cov[3][3] = {};
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    const double u0 = (2.0 * i / (n - 1) - 1.0) * half * sig[0];
                    const double u1 = (2.0 * j / (n - 1) - 1.0) * half * sig[1];
                    const double u2 = (2.0 * k / (n - 1) - 1.0) * half * sig[2];
                    Vec3 x = cg.mu3 + axes[0] * u0 + axes[1] * u1 + axes[2] * u2;
                    const double w = density4(g, x, t);
                    wsum += w;
                    mean += x * w;
                }
        mean = mean * (1.0 / wsum);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) {
                    const double u0 = (2.0 * i / (n - 1) - 1.0) * half * sig[0];
                    const double u1 = (2.0 * j / (n - 1) - 1.0) * half * sig[1];
                    const double u2 = (2.0 * k / (n - 1) - 1.0) * half * sig[2];
                    Vec3 x = cg.mu3 + axes[0] * u0 + axes[1] * u1 + axes[2] * u2;
                    const double w = density4(g, x, t);
                    Vec3 d = x - mean;
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b) cov[a][b] += w * d[a] * d[b];
                }
        const double scale = std::max(
            {std::abs(cg.mu3.x), std::abs(cg.mu3.y), std::abs(cg.mu3.z), sig[2], 1e-3});
        CHECK(std::abs(mean.x - cg.mu3.x) < 1e-3 * scale);
        CHECK(std::abs(mean.y - cg.mu3.y) < 1e-3 * scale);
        CHECK(std::abs(mean.z - cg.mu3.z) < 1e-3 * scale);
        Mat3 c3 = cg.cov3.to_mat();
        const double cscale = std::max(c3.max_abs(), 1e-9);
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                CHECK(std::abs(cov[a][b] / wsum - c3(a, b)) < 1e-3 * cscale);
    }
}

TEST_CASE("4D density factors into temporal weight times conditioned density") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nrm(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Gaussian4D g = random_gaussian(rng);
        const double t = g.mu.w + 0.3 * nrm(rng);
        ConditionedGaussian3D cg = condition_at_time(g, t);
        for (int pt = 0; pt < 10; ++pt) {
            Vec3 x = cg.mu3 + Vec3{nrm(rng), nrm(rng), nrm(rng)} * 0.3;
            const double lhs = density4(g, x, t);
            const double rhs = cg.temporal_weight * density3(cg, x);
            if (lhs > 1e-300)
                CHECK(std::abs(lhs - rhs) / lhs < 1e-10);
        }
    }
}

TEST_CASE("conditioning never inflates the spatial covariance") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        Gaussian4D g = random_gaussian(rng);
        Mat4 cov4 = g.cov4().to_mat();
        Mat3 sxx;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) sxx(i, j) = cov4(i, j);
        ConditionedGaussian3D cg = condition_at_time(g, 0.5);
        const double lmax_cond = eig_sym3(cg.cov3).values.z;
        const double lmax_marg = eig_sym3(Sym3::from_mat(sxx)).values.z;
        CHECK(lmax_cond <= lmax_marg + 1e-12);
    }
}

TEST_CASE("effective opacity approaches the temporal weight limit") {
    Gaussian4D g;
    g.sh = AppearanceCoeffs::zeros(AppearanceConfig{});
    g.mu = {0, 0, 0, 0.5};
    g.opacity_logit = 40.0; // alpha -> 1
    CHECK(effective_opacity(g, 0.5) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("effective opacity is the product of opacity and temporal weight") {
    Gaussian4D g;
    g.sh = AppearanceCoeffs::zeros(AppearanceConfig{});
    g.mu = {0, 0, 0, 0.5};
    g.opacity_logit = inv_sigmoid(0.8);
    // choose dt so the temporal weight is 0.5
    const double stt = 1.0 + kCovEps;
    const double dt = std::sqrt(2.0 * stt * std::log(2.0));
    CHECK(effective_opacity(g, 0.5 + dt) == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("effective opacity far from the mean time is cullable") {
    Gaussian4D g;
    g.sh = AppearanceCoeffs::zeros(AppearanceConfig{});
    g.mu = {0, 0, 0, 0.0};
    g.opacity_logit = inv_sigmoid(0.9);
    const double stt = 1.0 + kCovEps;
    const double t = 6.0 * std::sqrt(stt);
    const double expect = std::exp(-18.0);
    CHECK(effective_opacity(g, t) < 1e-7 * 0.9);
    CHECK(effective_opacity(g, t) == doctest::Approx(0.9 * expect).epsilon(1e-6));
}

TEST_CASE("cull_by_time keeps everything at the mean time") {
    GaussianCloud cloud = testing::random_cloud(32, 21);
    for (Gaussian4D& g : cloud.gaussians) g.mu.w = 0.5;
    auto kept = cull_by_time(cloud, 0.5, 1e-4);
    CHECK(kept.size() == cloud.size());
    CHECK_THROWS_AS(cull_by_time(cloud, 0.5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(cull_by_time(cloud, 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("cull_by_time drops a gaussian ten sigma away") {
    GaussianCloud cloud;
    cloud.appearance = AppearanceConfig{};
    Gaussian4D g;
    g.sh = AppearanceCoeffs::zeros(cloud.appearance);
    g.mu = {0, 0, 0, 0.0};
    g.scales.log_s.w = 0.0; // sigma_t = 1
    cloud.gaussians.push_back(g);
    const double stt = 1.0 + kCovEps;
    auto kept = cull_by_time(cloud, 10.0 * std::sqrt(stt), 1e-4);
    CHECK(kept.empty()); // exp(-50) << 1e-4
}

TEST_CASE("cull_by_time matches a direct weight recomputation") {
    GaussianCloud cloud = testing::random_cloud(64, 27);
    const double t = 0.9, thr = 0.2;
    auto kept = cull_by_time(cloud, t, thr);
    std::vector<uint32_t> expect;
    for (uint32_t i = 0; i < cloud.size(); ++i)
        if (condition_at_time(cloud.gaussians[i], t).temporal_weight >= thr)
            expect.push_back(i);
    CHECK(kept == expect);
}
