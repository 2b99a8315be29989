#pragma once

// Independent reference routines for testing. Everything here recomputes
// results from first principles (plain loops, explicit matrices) and must not
// call into the library paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "unitok/model.hpp"
#include "unitok/numeric.hpp"

namespace oracle {

using unitok::Vec;

inline double rel_err(double a, double b, double atol = 1e-9) {
    double scale = std::max({std::abs(a), std::abs(b), atol});
    return std::abs(a - b) / scale;
}

// Central difference d f / d x[i].
inline double central_diff(const std::function<double(const Vec&)>& f, Vec x, size_t i,
                           double h = 1e-5) {
    double orig = x[i];
    x[i] = orig + h;
    double up = f(x);
    x[i] = orig - h;
    double down = f(x);
    return (up - down) / (2.0 * h);
}

inline Vec matvec(const std::vector<Vec>& w, const Vec& b, const Vec& x) {
    Vec y(w.size());
    for (size_t r = 0; r < w.size(); ++r) {
        double s = b[r];
        for (size_t c = 0; c < x.size(); ++c) s += w[r][c] * x[c];
        y[r] = s;
    }
    return y;
}

inline Vec softmax(const Vec& s) {
    Vec p(s.size());
    double z = 0.0;
    for (size_t i = 0; i < s.size(); ++i) {
        p[i] = std::exp(s[i]);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

inline std::vector<Vec> matmul(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    size_t n = a.size(), m = b[0].size(), inner = b.size();
    std::vector<Vec> out(n, Vec(m, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < inner; ++k) {
            for (size_t j = 0; j < m; ++j) out[i][j] += a[i][k] * b[k][j];
        }
    }
    return out;
}

// Textbook HSIC: explicit Gram matrices, explicit centering matrix H, a
// triple product, and a trace.
inline double hsic_naive(const std::vector<Vec>& xs, const std::vector<Vec>& zs, double sigma_x,
                         double sigma_z) {
    size_t n = xs.size();
    auto gram = [](const std::vector<Vec>& pts, double sigma) {
        size_t n = pts.size();
        std::vector<Vec> g(n, Vec(n, 0.0));
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = 0; j < n; ++j) {
                double d2 = 0.0;
                for (size_t k = 0; k < pts[i].size(); ++k) {
                    double d = pts[i][k] - pts[j][k];
                    d2 += d * d;
                }
                g[i][j] = std::exp(-d2 / (2.0 * sigma * sigma));
            }
        }
        return g;
    };
    std::vector<Vec> u = gram(xs, sigma_x);
    std::vector<Vec> v = gram(zs, sigma_z);
    std::vector<Vec> h(n, Vec(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) h[i][j] = (i == j ? 1.0 : 0.0) - 1.0 / n;
    }
    std::vector<Vec> prod = matmul(matmul(matmul(u, h), v), h);
    double tr = 0.0;
    for (size_t i = 0; i < n; ++i) tr += prod[i][i];
    return tr / ((n - 1.0) * (n - 1.0));
}

// Median pairwise distance by full sort; midpoint average for even counts,
// floored at 1e-6.
inline double median_bandwidth_naive(const std::vector<Vec>& pts) {
    std::vector<double> d;
    for (size_t i = 0; i < pts.size(); ++i) {
        for (size_t j = i + 1; j < pts.size(); ++j) {
            double s = 0.0;
            for (size_t k = 0; k < pts[i].size(); ++k) {
                double diff = pts[i][k] - pts[j][k];
                s += diff * diff;
            }
            d.push_back(std::sqrt(s));
        }
    }
    std::sort(d.begin(), d.end());
    size_t mid = d.size() / 2;
    double med = d.size() % 2 == 1 ? d[mid] : 0.5 * (d[mid] + d[mid - 1]);
    return std::max(med, 1e-6);
}

// Residual quantization re-simulated from the recurrence: pick the closest
// code, subtract, repeat.
struct RqSim {
    std::vector<int> indices;
    Vec quantized;
    Vec final_residual;
};

inline RqSim rq_resimulate(const std::vector<std::vector<Vec>>& stack_levels, const Vec& z) {
    RqSim sim;
    Vec r = z;
    for (const auto& codes : stack_levels) {
        int best = 0;
        std::vector<double> dist(codes.size());
        for (size_t t = 0; t < codes.size(); ++t) {
            double s = 0.0;
            for (size_t j = 0; j < r.size(); ++j) {
                double d = r[j] - codes[t][j];
                s += d * d;
            }
            dist[t] = s;
        }
        best = static_cast<int>(std::min_element(dist.begin(), dist.end()) - dist.begin());
        sim.indices.push_back(best);
        for (size_t j = 0; j < r.size(); ++j) r[j] -= codes[best][j];
    }
    sim.final_residual = r;
    sim.quantized.resize(z.size());
    for (size_t j = 0; j < z.size(); ++j) sim.quantized[j] = z[j] - r[j];
    return sim;
}

// Copies a codebook stack into plain nested vectors for the naive routines.
inline std::vector<std::vector<Vec>> stack_codes(const unitok::CodebookStack& s) {
    std::vector<std::vector<Vec>> out;
    for (const auto& level : s.levels) {
        std::vector<Vec> codes;
        for (int t = 0; t < level.size(); ++t) {
            codes.emplace_back(level.codes.row(t), level.codes.row(t) + level.dim());
        }
        out.push_back(std::move(codes));
    }
    return out;
}

}  // namespace oracle
