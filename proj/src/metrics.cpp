#include "sp4d/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sp4d {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_kernel() {
    static const std::vector<double> k = [] {
        std::vector<double> v(kWin);
        double sum = 0;
        for (int i = 0; i < kWin; ++i) {
            double d = i - (kWin - 1) / 2.0;
            v[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
            sum += v[i];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return k;
}

// Separable zero-padded 'same' convolution; the kernel is symmetric, so the
// operation is its own adjoint.
void conv_same(const std::vector<double>& src, int w, int h, std::vector<double>& dst,
               std::vector<double>& tmp) {
    const auto& k = gaussian_kernel();
    const int r = kWin / 2;
    tmp.assign(src.size(), 0.0);
    dst.assign(src.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) {
                int xx = x + i;
                if (xx < 0 || xx >= w) continue;
                acc += k[i + r] * src[static_cast<size_t>(y) * w + xx];
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int i = -r; i <= r; ++i) {
                int yy = y + i;
                if (yy < 0 || yy >= h) continue;
                acc += k[i + r] * tmp[static_cast<size_t>(yy) * w + x];
            }
            dst[static_cast<size_t>(y) * w + x] = acc;
        }
}

void check_shapes(const ImageF& a, const ImageF& b, const Image<uint8_t>* include) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels)
        throw std::invalid_argument("metric: image shapes differ");
    if (include && (include->width != a.width || include->height != a.height))
        throw std::invalid_argument("metric: mask shape differs");
}

bool included(const Image<uint8_t>* inc, int x, int y) {
    return !inc || inc->at(x, y) != 0;
}

}  // namespace

double psnr(const ImageF& a, const ImageF& b, const Image<uint8_t>* include) {
    check_shapes(a, b, include);
    double se = 0;
    size_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!included(include, x, y)) continue;
            for (int c = 0; c < a.channels; ++c) {
                double d = a.at(x, y, c) - b.at(x, y, c);
                se += d * d;
            }
            n += a.channels;
        }
    if (n == 0) return kPsnrCap;
    double mse = se / static_cast<double>(n);
    if (mse <= 0) return kPsnrCap;
    return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

namespace {

double ssim_impl(const ImageF& a, const ImageF& b, const Image<uint8_t>* include,
                 ImageF* d_a) {
    check_shapes(a, b, include);
    const int w = a.width, h = a.height, ch = a.channels;
    const size_t plane = static_cast<size_t>(w) * h;

    size_t n_inc = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (included(include, x, y)) ++n_inc;
    if (d_a) *d_a = ImageF(w, h, ch, 0.0);
    if (n_inc == 0) return 1.0;
    const double inv_n = 1.0 / (static_cast<double>(n_inc) * ch);

    std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
    std::vector<double> mu_x, mu_y, m_xx, m_yy, m_xy, tmp;
    std::vector<double> f_mu(plane), f_x2(plane), f_xy(plane), g1, g2, g3;

    double total = 0;
    for (int c = 0; c < ch; ++c) {
        for (int py = 0; py < h; ++py)
            for (int px = 0; px < w; ++px) {
                size_t i = static_cast<size_t>(py) * w + px;
                bool inc = included(include, px, py);
                double xv = inc ? a.at(px, py, c) : 0.0;
                double yv = inc ? b.at(px, py, c) : 0.0;
                x[i] = xv;
                y[i] = yv;
                xx[i] = xv * xv;
                yy[i] = yv * yv;
                xy[i] = xv * yv;
            }
        conv_same(x, w, h, mu_x, tmp);
        conv_same(y, w, h, mu_y, tmp);
        conv_same(xx, w, h, m_xx, tmp);
        conv_same(yy, w, h, m_yy, tmp);
        conv_same(xy, w, h, m_xy, tmp);

        for (int py = 0; py < h; ++py)
            for (int px = 0; px < w; ++px) {
                size_t i = static_cast<size_t>(py) * w + px;
                f_mu[i] = f_x2[i] = f_xy[i] = 0;
                if (!included(include, px, py)) continue;
                const double ux = mu_x[i], uy = mu_y[i];
                const double sx = m_xx[i] - ux * ux;
                const double sy = m_yy[i] - uy * uy;
                const double sxy = m_xy[i] - ux * uy;
                const double n1 = 2.0 * ux * uy + kC1;
                const double d1 = ux * ux + uy * uy + kC1;
                const double n2 = 2.0 * sxy + kC2;
                const double d2 = sx + sy + kC2;
                const double s = (n1 * n2) / (d1 * d2);
                total += s;
                if (!d_a) continue;
                const double ds_dn1 = n2 / (d1 * d2);
                const double ds_dn2 = n1 / (d1 * d2);
                const double ds_dd1 = -s / d1;
                const double ds_dd2 = -s / d2;
                // raw-moment partials: mu_x, conv(x*x), conv(x*y)
                f_mu[i] = inv_n * (ds_dn1 * 2.0 * uy + ds_dd1 * 2.0 * ux +
                                   ds_dn2 * (-2.0 * uy) + ds_dd2 * (-2.0 * ux));
                f_x2[i] = inv_n * ds_dd2;
                f_xy[i] = inv_n * ds_dn2 * 2.0;
            }

        if (d_a) {
            conv_same(f_mu, w, h, g1, tmp);
            conv_same(f_x2, w, h, g2, tmp);
            conv_same(f_xy, w, h, g3, tmp);
            for (int py = 0; py < h; ++py)
                for (int px = 0; px < w; ++px) {
                    if (!included(include, px, py)) continue; // zeroed input
                    size_t i = static_cast<size_t>(py) * w + px;
                    d_a->at(px, py, c) = g1[i] + 2.0 * x[i] * g2[i] + y[i] * g3[i];
                }
        }
    }
    return total * inv_n;
}

}  // namespace

double ssim(const ImageF& a, const ImageF& b, const Image<uint8_t>* include) {
    return ssim_impl(a, b, include, nullptr);
}

double ssim_with_grad(const ImageF& a, const ImageF& b, const Image<uint8_t>* include,
                      ImageF& d_a) {
    return ssim_impl(a, b, include, &d_a);
}

}  // namespace sp4d
