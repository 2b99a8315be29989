#pragma once

// Residual quantization: per-expert stacks of L codebooks with exhaustive
// nearest-neighbor search, the quantization loss with stop-gradient routing,
// k-means initialization, and dead-code maintenance.

#include <vector>

#include "unitok/numeric.hpp"

namespace unitok {

struct Codebook {
    Matrix codes;   // T x dim
    Matrix gcodes;  // gradient buffer, same shape

    int size() const { return codes.rows; }
    int dim() const { return codes.cols; }
};

struct CodebookStack {
    std::vector<Codebook> levels;
    std::vector<std::vector<long>> usage;  // per level, per code; reset each epoch

    int num_levels() const { return static_cast<int>(levels.size()); }
    int codebook_size() const { return levels.empty() ? 0 : levels[0].size(); }
    int dim() const { return levels.empty() ? 0 : levels[0].dim(); }
    size_t param_count() const;

    static CodebookStack zeros(int num_levels, int codebook_size, int dim);
    void reset_usage();
    void note_usage(const struct RQResult& r);
};

struct RQResult {
    std::vector<int> indices;    // one code index per level
    Vec quantized;               // sum of the selected codes, level 1..L
    std::vector<Vec> residuals;  // residuals[l] is the residual after l levels; residuals[0] = z
};

struct NearestCode {
    int index = 0;
    Vec code;
};

// Exhaustive scan for the code minimizing squared distance; ties go to the
// lowest index.
NearestCode nearest_code(const Vec& r, const Codebook& cb);

// Greedy residual quantization of z through the stack. Read-only.
RQResult rq_quantize(const CodebookStack& stack, const Vec& z);
// Same, but records code usage on the stack.
RQResult rq_encode(CodebookStack& stack, const Vec& z);

// Quantization loss for one encode: per level, an alignment term pulling the
// code toward the residual it quantizes plus alpha times a commitment term
// pulling the input toward the codes. Both terms share the value
// (1 + alpha) * |r_l|^2; they differ in where the gradient goes.
double rq_loss(const RQResult& r, double alpha);

// Accumulates scale * d(rq_loss)/d(codes) into stack.gcodes and adds
// scale * d(rq_loss)/dz to grad_z. Codes see only the alignment term; grad_z
// sees only the commitment term.
void rq_loss_backward(CodebookStack& stack, const RQResult& r, double alpha, double scale,
                      Vec& grad_z);

// Lloyd's k-means with k-means++ seeding. Returns k x dim centroids. If the
// points are fewer than k, centroids are padded by duplication with jitter
// (std 1e-3).
Matrix kmeans(const std::vector<Vec>& points, int k, int iters, Rng& rng);

// Level 1 is k-means over the given latents; each deeper level is k-means
// over the residuals left by the previous one. With T = 1 this reduces to
// the per-level mean.
CodebookStack init_stack_from_domain(const std::vector<Vec>& latents, int num_levels,
                                     int codebook_size, Rng& rng);

// Codes used fewer than `threshold` times this epoch are reassigned to a
// random residual observed at their level (jitter std 1e-3). Usage counters
// are reset. Returns the number of codes moved.
int reset_dead_codes(CodebookStack& stack, const std::vector<std::vector<Vec>>& level_residuals,
                     long threshold, Rng& rng);

}  // namespace unitok
