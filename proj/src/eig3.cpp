#include "sp4d/eig3.hpp"

#include <algorithm>

namespace sp4d {

Eig3 eig_sym3(const Sym3& sym) {
    Mat3 a = sym.to_mat();
    Mat3 v = Mat3::identity();

    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = sqr(a(0, 1)) + sqr(a(0, 2)) + sqr(a(1, 2));
        if (off < 1e-60) break;
        static constexpr int pairs[3][2] = {{0, 1}, {0, 2}, {1, 2}};
        for (auto [p, q] : pairs) {
            double apq = a(p, q);
            if (apq == 0.0) continue;
            double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
            double t = (theta >= 0 ? 1.0 : -1.0) /
                       (std::abs(theta) + std::sqrt(theta * theta + 1.0));
            double c = 1.0 / std::sqrt(t * t + 1.0);
            double s = t * c;
            for (int k = 0; k < 3; ++k) {
                double akp = a(k, p), akq = a(k, q);
                a(k, p) = c * akp - s * akq;
                a(k, q) = s * akp + c * akq;
            }
            for (int k = 0; k < 3; ++k) {
                double apk = a(p, k), aqk = a(q, k);
                a(p, k) = c * apk - s * aqk;
                a(q, k) = s * apk + c * aqk;
            }
            for (int k = 0; k < 3; ++k) {
                double vkp = v(k, p), vkq = v(k, q);
                v(k, p) = c * vkp - s * vkq;
                v(k, q) = s * vkp + c * vkq;
            }
        }
    }

    std::array<int, 3> order = {0, 1, 2};
    Vec3 lam{a(0, 0), a(1, 1), a(2, 2)};
    std::sort(order.begin(), order.end(), [&](int i, int j) { return lam[i] < lam[j]; });

    Eig3 out;
    for (int c = 0; c < 3; ++c) {
        int src = order[c];
        out.values[c] = lam[src];
        Vec3 col{v(0, src), v(1, src), v(2, src)};
        for (int r = 0; r < 3; ++r) {
            if (std::abs(col[r]) > 1e-12) {
                if (col[r] < 0) col = -col;
                break;
            }
        }
        out.vectors(0, c) = col.x;
        out.vectors(1, c) = col.y;
        out.vectors(2, c) = col.z;
    }
    return out;
}

}  // namespace sp4d
