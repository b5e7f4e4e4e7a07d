#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "sp4d/appearance.hpp"
#include "test_util.hpp"

using namespace sp4d;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.resize(n);
    w.resize(n);
    for (int i = 0; i < n; ++i) {
        double t = std::cos(kPi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = 0;
            for (int k = 0; k < n; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) * t * p1 - k * p2) / (k + 1);
            }
            double dp = n * (t * p0 - p1) / (t * t - 1);
            double dt = p0 / dp;
            t -= dt;
            if (std::abs(dt) < 1e-15) break;
        }
        double p0 = 1, p1 = 0;
        for (int k = 0; k < n; ++k) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2 * k + 1) * t * p1 - k * p2) / (k + 1);
        }
        double dp = n * (t * p0 - p1) / (t * t - 1);
        x[i] = t;
        w[i] = 2.0 / ((1 - t * t) * dp * dp);
    }
}

// Quadrature over the unit sphere: Gauss-Legendre in cos(theta) x uniform phi.
template <typename F>
double sphere_integral(F&& f, int order = 50) {
    std::vector<double> x, w;
    gauss_legendre(order, x, w);
    const int n_phi = 2 * order + 1;
    double acc = 0;
    for (int i = 0; i < order; ++i) {
        const double ct = x[i], st = std::sqrt(1 - ct * ct);
        for (int j = 0; j < n_phi; ++j) {
            const double phi = 2.0 * kPi * j / n_phi;
            acc += w[i] * f(Vec3{st * std::cos(phi), st * std::sin(phi), ct});
        }
    }
    return acc * (2.0 * kPi / n_phi);
}

}  // namespace

TEST_CASE("analytic SH constants") {
    CHECK(eval_sh(0, 0, {0.3, -0.5, 0.812403840463596}.normalized()) ==
          doctest::Approx(0.2820947918).epsilon(1e-10));
    CHECK(eval_sh(1, 0, {0, 0, 1}) == doctest::Approx(0.4886025119).epsilon(1e-10));
}

TEST_CASE("degree and direction preconditions are enforced") {
    CHECK_THROWS_AS(eval_sh(4, 0, {0, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(eval_sh(2, 3, {0, 0, 1}), std::invalid_argument);
    CHECK_THROWS_AS(eval_sh(1, 0, {0, 0, 2}), std::invalid_argument);
}

TEST_CASE("spherical harmonics are orthonormal under 50th-order quadrature") {
    for (int l1 = 0; l1 <= 3; ++l1)
        for (int m1 = -l1; m1 <= l1; ++m1)
            for (int l2 = l1; l2 <= 3; ++l2)
                for (int m2 = (l2 == l1 ? m1 : -l2); m2 <= l2; ++m2) {
                    const double val = sphere_integral([&](const Vec3& d) {
                        return eval_sh(l1, m1, d) * eval_sh(l2, m2, d);
                    });
                    const double expect = (l1 == l2 && m1 == m2) ? 1.0 : 0.0;
                    CHECK(std::abs(val - expect) < 1e-3);
                }
}

TEST_CASE("temporal basis: DC band is constant one") {
    AppearanceConfig cfg;
    const double phases[2] = {0.3, -0.7};
    for (double t : {0.0, 0.31, 0.77, 1.0})
        CHECK(eval_basis(cfg, 0, 1, 0, t, {0, 0, 1}, phases) ==
              eval_sh(1, 0, {0, 0, 1}));
}

TEST_CASE("temporal basis: quarter-period sine reaches one") {
    AppearanceConfig cfg;
    const double phases[2] = {0.0, 0.0};
    const double v = eval_basis(cfg, 1, 0, 0, cfg.period / 4.0, {0, 0, 1}, phases);
    CHECK(v == doctest::Approx(eval_sh(0, 0, {0, 0, 1})).epsilon(1e-12));
}

TEST_CASE("temporal sinusoids are orthogonal over one period (trapezoid oracle)") {
    AppearanceConfig cfg;
    const double T = cfg.period;
    const int n = 4096;
    for (int a = 0; a <= 2; ++a)
        for (int b = a; b <= 2; ++b) {
            double acc = 0;
            for (int i = 0; i <= n; ++i) {
                const double t = T * i / n;
                auto f = [&](int band) {
                    return band == 0 ? 1.0 : std::sin(2.0 * kPi * band * t / T);
                };
                const double v = f(a) * f(b);
                acc += (i == 0 || i == n) ? 0.5 * v : v;
            }
            acc *= T / n;
            double expect = 0;
            if (a == b) expect = a == 0 ? T : T / 2;
            CHECK(std::abs(acc - expect) < 1e-6);
        }
}

TEST_CASE("full spherindrical basis: cross terms vanish under quadrature") {
    AppearanceConfig cfg; // L = 3, N_t = 2, shared zero phases
    const double phases[2] = {0.0, 0.0};
    const int nt = 64;
    struct Idx {
        int n, l, m;
    };
    std::vector<Idx> basis;
    for (int n = 0; n <= cfg.temporal_bands; ++n)
        for (int l = 0; l <= cfg.sh_degree; ++l)
            for (int m = -l; m <= l; ++m) basis.push_back({n, l, m});

    // time-trapezoid x sphere-quadrature; skip identical pairs
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<size_t> pick(0, basis.size() - 1);
    int checked = 0;
    for (size_t a = 0; a < basis.size(); ++a) {
        for (size_t b = a + 1; b < basis.size(); ++b) {
            if (checked > 400 && ((a * 131 + b) % 7)) continue; // thin out the long tail
            double acc = 0;
            for (int i = 0; i <= nt; ++i) {
                const double t = cfg.period * i / nt;
                const double s = sphere_integral(
                    [&](const Vec3& d) {
                        return eval_basis(cfg, basis[a].n, basis[a].l, basis[a].m, t, d,
                                          phases) *
                               eval_basis(cfg, basis[b].n, basis[b].l, basis[b].m, t, d,
                                          phases);
                    },
                    12);
                acc += (i == 0 || i == nt) ? 0.5 * s : s;
            }
            acc *= cfg.period / nt;
            CHECK(std::abs(acc) < 1e-3);
            ++checked;
        }
    }
}

TEST_CASE("zero coefficients give mid gray") {
    AppearanceConfig cfg;
    AppearanceCoeffs c = AppearanceCoeffs::zeros(cfg);
    Vec3 rgb = eval_color(cfg, c, 0.37, Vec3{0.48, -0.6, 0.64}.normalized());
    CHECK(rgb.x == 0.5);
    CHECK(rgb.y == 0.5);
    CHECK(rgb.z == 0.5);
}

TEST_CASE("DC coefficient solving for white") {
    AppearanceConfig cfg;
    AppearanceCoeffs c = AppearanceCoeffs::zeros(cfg);
    const double g = 0.5 / eval_sh(0, 0, {0, 0, 1});
    c.k[0] = c.k[1] = c.k[2] = g;
    Vec3 rgb = eval_color(cfg, c, 0.2, Vec3{1, 2, -1}.normalized());
    CHECK(rgb.x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rgb.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rgb.z == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("least-squares fit reconstructs a smooth target within its residual") {
    AppearanceConfig cfg;
    const int nb = cfg.coeff_count();

    // smooth positive target on (t, dir), bounded away from the clamp
    auto target = [](double t, const Vec3& d) {
        return 0.5 + 0.18 * std::sin(2.0 * kPi * t) * d.z + 0.1 * d.x * d.y +
               0.06 * std::cos(2.0 * kPi * t);
    };

    // sample grid
    std::vector<double> ts;
    std::vector<Vec3> dirs;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nrm(0, 1);
    for (int i = 0; i < 12; ++i) ts.push_back(i / 12.0);
    for (int i = 0; i < 80; ++i) dirs.push_back(Vec3{nrm(rng), nrm(rng), nrm(rng)}.normalized());

    const int rows = static_cast<int>(ts.size() * dirs.size());
    Eigen::MatrixXd A(rows, nb);
    Eigen::VectorXd y(rows);
    AppearanceCoeffs probe = AppearanceCoeffs::zeros(cfg);
    int r = 0;
    for (double t : ts)
        for (const Vec3& d : dirs) {
            int col = 0;
            for (int n = 0; n <= cfg.temporal_bands; ++n)
                for (int l = 0; l <= cfg.sh_degree; ++l)
                    for (int m = -l; m <= l; ++m)
                        A(r, col++) = eval_basis(cfg, n, l, m, t, d, probe.phases.data());
            y(r) = target(t, d) - 0.5;
            ++r;
        }
    Eigen::VectorXd k = (A.transpose() * A).ldlt().solve(A.transpose() * y);
    const double fit_rmse = std::sqrt((A * k - y).squaredNorm() / rows);

    AppearanceCoeffs c = AppearanceCoeffs::zeros(cfg);
    for (int i = 0; i < nb; ++i) c.k[i * 3 + 0] = k(i);
    double rec_se = 0;
    for (double t : ts)
        for (const Vec3& d : dirs) {
            const double got = eval_color(cfg, c, t, d).x;
            rec_se += sqr(got - target(t, d));
        }
    const double rec_rmse = std::sqrt(rec_se / rows);
    CHECK(rec_rmse <= fit_rmse + 1e-9);
}

TEST_CASE("color is smooth: directional derivatives match finite differences") {
    AppearanceConfig cfg;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.4, 0.4);
    AppearanceCoeffs c = AppearanceCoeffs::zeros(cfg);
    for (double& v : c.k) v = u(rng);
    c.phases = {0.4, -0.2};
    const double t = 0.41;
    Vec3 dir = Vec3{0.3, -0.8, 0.5}.normalized();

    std::vector<double> dk(c.k.size(), 0.0);
    std::vector<double> dph(c.phases.size(), 0.0);
    Vec3 ddir{0, 0, 0};
    eval_color_backward(cfg, c, t, dir, 3, {1.0, 0.0, 0.0}, dk.data(), dph.data(), ddir);

    const double h = 1e-6;
    for (int axis = 0; axis < 3; ++axis) {
        // perturb the *unnormalized* direction and renormalize, projecting
        // the raw polynomial gradient the same way
        Vec3 dp = dir, dm = dir;
        dp[axis] += h;
        dm[axis] -= h;
        const double fp = eval_color(cfg, c, t, dp.normalized()).x;
        const double fm = eval_color(cfg, c, t, dm.normalized()).x;
        const double fd = (fp - fm) / (2 * h);
        const Vec3 proj = ddir - dir * dir.dot(ddir);
        CHECK(std::abs(proj[axis] - fd) <
              1e-4 * std::max({std::abs(fd), std::abs(proj[axis]), 1e-6}));
    }
    // coefficient and phase gradients against finite differences
    for (size_t i : {size_t{0}, size_t{33}, size_t{100}}) {
        AppearanceCoeffs cp = c, cm = c;
        cp.k[i] += h;
        cm.k[i] -= h;
        const double fd =
            (eval_color(cfg, cp, t, dir).x - eval_color(cfg, cm, t, dir).x) / (2 * h);
        CHECK(std::abs(dk[i] - fd) < 1e-6 + 1e-6 * std::abs(fd));
    }
    for (size_t i : {size_t{0}, size_t{1}}) {
        AppearanceCoeffs cp = c, cm = c;
        cp.phases[i] += h;
        cm.phases[i] -= h;
        const double fd =
            (eval_color(cfg, cp, t, dir).x - eval_color(cfg, cm, t, dir).x) / (2 * h);
        CHECK(std::abs(dph[i] - fd) < 1e-6 + 1e-6 * std::abs(fd));
    }
}

TEST_CASE("zero temporal bands reduce bitwise to static spherical-harmonic color") {
    AppearanceConfig static_cfg;
    static_cfg.temporal_bands = 0;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    AppearanceCoeffs c = AppearanceCoeffs::zeros(static_cfg);
    for (double& v : c.k) v = u(rng);

    for (int trial = 0; trial < 50; ++trial) {
        Vec3 dir = Vec3{u(rng), u(rng), u(rng) + 0.7}.normalized();
        const double t = u(rng);
        Vec3 got = eval_color(static_cfg, c, t, dir);

        // reference static 3DGS color path: 0.5 + sum k*Y, clamped
        double sh[16];
        eval_sh_basis(3, dir, sh);
        for (int ch = 0; ch < 3; ++ch) {
            double acc = 0.5;
            for (int i = 0; i < 16; ++i) acc += c.k[i * 3 + ch] * sh[i];
            CHECK((&got.x)[ch] == std::max(0.0, acc));
        }
    }
}

TEST_CASE("active degree truncates higher bands") {
    AppearanceConfig cfg;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    AppearanceCoeffs c = AppearanceCoeffs::zeros(cfg);
    for (double& v : c.k) v = u(rng);
    AppearanceCoeffs dc_only = c;
    for (int n = 0; n <= cfg.temporal_bands; ++n)
        for (int i = 1; i < 16; ++i)
            for (int ch = 0; ch < 3; ++ch) dc_only.k[(n * 16 + i) * 3 + ch] = 0;
    Vec3 dir = Vec3{0.2, 0.5, -0.9}.normalized();
    Vec3 a = eval_color(cfg, c, 0.3, dir, 0);
    Vec3 b = eval_color(cfg, dc_only, 0.3, dir, 3);
    CHECK(a.x == doctest::Approx(b.x).epsilon(1e-14));
    CHECK(a.y == doctest::Approx(b.y).epsilon(1e-14));
    CHECK(a.z == doctest::Approx(b.z).epsilon(1e-14));
}
