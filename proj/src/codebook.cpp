#include "unitok/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace unitok {

size_t CodebookStack::param_count() const {
    size_t n = 0;
    for (const auto& l : levels) n += l.codes.data.size();
    return n;
}

CodebookStack CodebookStack::zeros(int num_levels, int codebook_size, int dim) {
    CodebookStack s;
    s.levels.resize(num_levels);
    for (auto& l : s.levels) {
        l.codes = Matrix(codebook_size, dim);
        l.gcodes = Matrix(codebook_size, dim);
    }
    s.usage.assign(num_levels, std::vector<long>(codebook_size, 0));
    return s;
}

void CodebookStack::reset_usage() {
    for (auto& lvl : usage) std::fill(lvl.begin(), lvl.end(), 0);
}

void CodebookStack::note_usage(const RQResult& r) {
    for (size_t l = 0; l < r.indices.size(); ++l) usage[l][r.indices[l]] += 1;
}

NearestCode nearest_code(const Vec& r, const Codebook& cb) {
    if (cb.size() == 0) throw ShapeError("nearest_code: empty codebook");
    if (static_cast<int>(r.size()) != cb.dim()) throw ShapeError("nearest_code: dim mismatch");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int t = 0; t < cb.size(); ++t) {
        const double* c = cb.codes.row(t);
        double d = 0.0;
        for (size_t j = 0; j < r.size(); ++j) {
            double diff = r[j] - c[j];
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = t;
        }
    }
    NearestCode out;
    out.index = best;
    out.code.assign(cb.codes.row(best), cb.codes.row(best) + cb.dim());
    return out;
}

RQResult rq_quantize(const CodebookStack& stack, const Vec& z) {
    if (static_cast<int>(z.size()) != stack.dim()) throw ShapeError("rq_quantize: dim mismatch");
    RQResult out;
    out.residuals.push_back(z);
    Vec r = z;
    for (const auto& level : stack.levels) {
        NearestCode nc = nearest_code(r, level);
        out.indices.push_back(nc.index);
        for (size_t j = 0; j < r.size(); ++j) r[j] -= nc.code[j];
        out.residuals.push_back(r);
    }
    // quantized is defined as r^(0) - r^(L), which keeps the reconstruction
    // identity exact in floating point.
    out.quantized.resize(z.size());
    for (size_t j = 0; j < z.size(); ++j) out.quantized[j] = z[j] - r[j];
    return out;
}

RQResult rq_encode(CodebookStack& stack, const Vec& z) {
    RQResult r = rq_quantize(stack, z);
    stack.note_usage(r);
    return r;
}

double rq_loss(const RQResult& r, double alpha) {
    double s = 0.0;
    for (size_t l = 1; l < r.residuals.size(); ++l) {
        s += (1.0 + alpha) * dot(r.residuals[l], r.residuals[l]);
    }
    return s;
}

void rq_loss_backward(CodebookStack& stack, const RQResult& r, double alpha, double scale,
                      Vec& grad_z) {
    // Alignment term: d/dc_l |r_{l-1} - c_l|^2 = -2 r_l (residual held constant).
    // Commitment term: d/dz alpha |r_{l-1} - c_l|^2 = 2 alpha r_l (codes held constant).
    for (int l = 0; l < stack.num_levels(); ++l) {
        const Vec& res = r.residuals[l + 1];
        double* gc = stack.levels[l].gcodes.row(r.indices[l]);
        for (size_t j = 0; j < res.size(); ++j) {
            gc[j] += -2.0 * scale * res[j];
            grad_z[j] += 2.0 * alpha * scale * res[j];
        }
    }
}

Matrix kmeans(const std::vector<Vec>& points, int k, int iters, Rng& rng) {
    if (points.empty()) throw ShapeError("kmeans: no points");
    if (k < 1) throw ShapeError("kmeans: k must be positive");
    int dim = static_cast<int>(points[0].size());
    int n = static_cast<int>(points.size());

    int k_eff = std::min(k, n);
    Matrix centroids(k_eff, dim);

    // k-means++ seeding.
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    int first = rng.uniform_int(n);
    std::copy(points[first].begin(), points[first].end(), centroids.row(0));
    for (int c = 1; c < k_eff; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double d = 0.0;
            const double* prev = centroids.row(c - 1);
            for (int j = 0; j < dim; ++j) {
                double diff = points[i][j] - prev[j];
                d += diff * diff;
            }
            d2[i] = std::min(d2[i], d);
            total += d2[i];
        }
        int pick;
        if (total <= 0.0) {
            pick = rng.uniform_int(n);
        } else {
            double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        std::copy(points[pick].begin(), points[pick].end(), centroids.row(c));
    }

    std::vector<int> assign(n, 0);
    std::vector<int> count(k_eff, 0);
    for (int it = 0; it < iters; ++it) {
        bool moved = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k_eff; ++c) {
                const double* ctr = centroids.row(c);
                double d = 0.0;
                for (int j = 0; j < dim; ++j) {
                    double diff = points[i][j] - ctr[j];
                    d += diff * diff;
                }
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) moved = true;
            assign[i] = best;
        }
        centroids.fill(0.0);
        std::fill(count.begin(), count.end(), 0);
        for (int i = 0; i < n; ++i) {
            double* ctr = centroids.row(assign[i]);
            for (int j = 0; j < dim; ++j) ctr[j] += points[i][j];
            ++count[assign[i]];
        }
        for (int c = 0; c < k_eff; ++c) {
            if (count[c] == 0) {
                // Empty cluster: restart on a random point.
                const Vec& p = points[rng.uniform_int(n)];
                std::copy(p.begin(), p.end(), centroids.row(c));
            } else {
                double* ctr = centroids.row(c);
                for (int j = 0; j < dim; ++j) ctr[j] /= count[c];
            }
        }
        if (!moved && it > 0) break;
    }

    if (k_eff == k) return centroids;
    // Fewer points than clusters: pad by duplicating centroids with jitter.
    Matrix padded(k, dim);
    for (int c = 0; c < k; ++c) {
        const double* src = centroids.row(c % k_eff);
        double* dst = padded.row(c);
        if (c < k_eff) {
            std::copy(src, src + dim, dst);
        } else {
            for (int j = 0; j < dim; ++j) dst[j] = src[j] + 1e-3 * rng.normal();
        }
    }
    return padded;
}

CodebookStack init_stack_from_domain(const std::vector<Vec>& latents, int num_levels,
                                     int codebook_size, Rng& rng) {
    if (latents.empty()) throw ShapeError("init_stack_from_domain: no latents");
    int dim = static_cast<int>(latents[0].size());
    CodebookStack stack = CodebookStack::zeros(num_levels, codebook_size, dim);
    std::vector<Vec> pts = latents;
    for (int l = 0; l < num_levels; ++l) {
        stack.levels[l].codes = kmeans(pts, codebook_size, 20, rng);
        stack.levels[l].gcodes = Matrix(codebook_size, dim);
        for (auto& p : pts) {
            NearestCode nc = nearest_code(p, stack.levels[l]);
            for (int j = 0; j < dim; ++j) p[j] -= nc.code[j];
        }
    }
    return stack;
}

int reset_dead_codes(CodebookStack& stack, const std::vector<std::vector<Vec>>& level_residuals,
                     long threshold, Rng& rng) {
    int resets = 0;
    static const std::vector<Vec> kEmpty;
    for (int l = 0; l < stack.num_levels(); ++l) {
        const auto& pool =
            l < static_cast<int>(level_residuals.size()) ? level_residuals[l] : kEmpty;
        for (int t = 0; t < stack.codebook_size(); ++t) {
            if (stack.usage[l][t] >= threshold) continue;
            if (pool.empty()) continue;
            const Vec& target = pool[rng.uniform_int(static_cast<int>(pool.size()))];
            double* code = stack.levels[l].codes.row(t);
            for (int j = 0; j < stack.dim(); ++j) code[j] = target[j] + 1e-3 * rng.normal();
            ++resets;
        }
    }
    stack.reset_usage();
    return resets;
}

}  // namespace unitok
