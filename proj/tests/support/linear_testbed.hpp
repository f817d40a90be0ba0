#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fosl/estimate.hpp"

namespace fosl::testing {

/// Affine system x+ = A x + B u + G d, z = C x + D u.
struct LinearTestbed {
    Mat a, b, g, c, d;
    Mat q, r;

    static LinearTestbed make() {
        LinearTestbed t;
        t.a.resize(3, 3);
        t.a << 0.95, 0.10, 0.0, -0.10, 0.95, 0.0, 0.0, 0.0, 0.90;
        t.b.resize(3, 1);
        t.b << 0.1, 0.0, 0.05;
        t.g.resize(3, 1);
        t.g << 0.0, 0.1, 0.05;
        t.c.resize(2, 3);
        t.c << 1.0, 0.0, 0.0, 0.0, 1.0, 1.0;
        t.d.resize(2, 1);
        t.d << 0.0, 0.2;
        t.q = Mat::Identity(3, 3) * 1e-4;
        t.r = Mat::Identity(2, 2) * 1e-3;
        return t;
    }

    est::SystemModel model() const {
        est::SystemModel m;
        m.fs = [this](const Vec& x, const Vec& u, const Vec& dd) {
            Vec out = a * x + b * u;
            if (dd.size() == g.cols()) out += g * dd;
            return out;
        };
        m.hs = [this](const Vec& x, const Vec& u) { return Vec(c * x + d * u); };
        return m;
    }

    est::FilterConfig filter() const {
        est::FilterConfig f;
        f.q = q;
        f.r = r;
        return f;
    }
};

struct KalmanOracle {
    Vec x;
    Mat p;
    Vec y;

    void step(const LinearTestbed& t, const Vec& u_prev, const Vec& u, const Vec& z) {
        const Vec xp = t.a * x + t.b * u_prev;
        const Mat pp = t.a * p * t.a.transpose() + t.q;
        const Vec zp = t.c * xp + t.d * u;
        const Mat s = t.c * pp * t.c.transpose() + t.r;
        const Mat k = pp * t.c.transpose() * s.inverse();
        y = z - zp;
        x = xp + k * y;
        p = pp - k * s * k.transpose();
    }
};

/// Noisy trajectory of the testbed driven by a known input and a constant
/// unknown input `d_true`.
struct LinearRun {
    std::vector<Vec> u, z, x;
};

inline LinearRun simulate_linear(const LinearTestbed& t, std::size_t steps, double d_true, std::uint64_t seed,
                                 double noise_scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    LinearRun run;
    Vec x = Vec::Zero(3);
    Vec d(1);
    d << d_true;
    const Eigen::LLT<Mat> lq(t.q), lr(t.r);
    const Mat lqm = lq.matrixL(), lrm = lr.matrixL();
    for (std::size_t k = 0; k < steps; ++k) {
        Vec u(1);
        u << std::sin(0.05 * static_cast<double>(k));
        if (k > 0) {
            Vec w(3);
            for (int i = 0; i < 3; ++i) w[i] = n(rng);
            x = t.a * x + t.b * run.u.back() + t.g * d + noise_scale * (lqm * w);
        }
        Vec v(2);
        for (int i = 0; i < 2; ++i) v[i] = n(rng);
        run.u.push_back(u);
        run.x.push_back(x);
        run.z.push_back(t.c * x + t.d * u + noise_scale * (lrm * v));
    }
    return run;
}

}  // namespace fosl::testing
