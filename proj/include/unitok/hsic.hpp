#pragma once

// Hilbert-Schmidt independence criterion between item embeddings and their
// latents, used as a nonparametric mutual-information proxy, plus the
// calibration loss that balances it across domains.

#include <optional>
#include <vector>

#include "unitok/numeric.hpp"

namespace unitok {

struct HsicConfig {
    enum class Bandwidth { median, fixed };
    Bandwidth bandwidth = Bandwidth::median;
    double sigma = 1.0;  // used when bandwidth == fixed
    // Scale on the median heuristic. The plain median makes the estimator
    // nearly flat in the latents at desk-scale sample sizes; half the median
    // keeps it scale-adaptive while restoring sensitivity.
    double median_scale = 0.5;
    int max_points_per_domain = 256;

    void validate() const;
};

// M_ij = exp(-|p_i - p_j|^2 / (2 sigma^2)); symmetric, unit diagonal.
Matrix gaussian_kernel_matrix(const std::vector<Vec>& points, double sigma);

// Median pairwise Euclidean distance, floored at 1e-6.
double median_bandwidth(const std::vector<Vec>& points);

struct HsicResult {
    double value = 0.0;
    double sigma_x = 0.0;
    double sigma_z = 0.0;
    std::vector<Vec> grad_z;  // filled when requested
};

// Biased estimator Tr(U H V H) / (n-1)^2 with Gaussian kernels U (over X) and
// V (over Z) and centering H = I - (1/n) 1 1^T. The gradient is taken through
// V only; bandwidths are treated as constants. Returns nullopt for n < 4,
// where the estimator degenerates and callers skip the domain.
std::optional<HsicResult> hsic(const std::vector<Vec>& x_points, const std::vector<Vec>& z_points,
                               const HsicConfig& config, bool want_grad);

struct MiCalibration {
    double value = 0.0;   // Var[I_k] - beta * E[I_k], population variance
    Vec grad;             // d(value)/dI_k per domain
};

MiCalibration mi_calibration_loss(const Vec& per_domain_hsic, double beta);

}  // namespace unitok
