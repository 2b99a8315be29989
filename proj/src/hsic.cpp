#include "unitok/hsic.hpp"

#include <algorithm>
#include <cmath>

namespace unitok {

void HsicConfig::validate() const {
    if (bandwidth == Bandwidth::fixed && sigma <= 0.0) {
        throw NumericError("hsic: fixed bandwidth must be positive");
    }
    if (max_points_per_domain < 4) {
        throw NumericError("hsic: max_points_per_domain must be at least 4");
    }
    if (bandwidth == Bandwidth::median && median_scale <= 0.0) {
        throw NumericError("hsic: median_scale must be positive");
    }
}

Matrix gaussian_kernel_matrix(const std::vector<Vec>& points, double sigma) {
    if (points.empty()) throw ShapeError("gaussian_kernel_matrix: no points");
    if (sigma <= 0.0) throw NumericError("gaussian_kernel_matrix: sigma must be positive");
    int n = static_cast<int>(points.size());
    Matrix m(n, n);
    double inv = 1.0 / (2.0 * sigma * sigma);
    for (int i = 0; i < n; ++i) {
        m.at(i, i) = 1.0;
        for (int j = i + 1; j < n; ++j) {
            double v = std::exp(-squared_distance(points[i], points[j]) * inv);
            m.at(i, j) = v;
            m.at(j, i) = v;
        }
    }
    return m;
}

double median_bandwidth(const std::vector<Vec>& points) {
    if (points.size() < 2) throw ShapeError("median_bandwidth: need at least 2 points");
    std::vector<double> d;
    d.reserve(points.size() * (points.size() - 1) / 2);
    for (size_t i = 0; i < points.size(); ++i) {
        for (size_t j = i + 1; j < points.size(); ++j) {
            d.push_back(std::sqrt(squared_distance(points[i], points[j])));
        }
    }
    size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + mid, d.end());
    double med = d[mid];
    if (d.size() % 2 == 0) {
        std::nth_element(d.begin(), d.begin() + mid - 1, d.begin() + mid);
        med = 0.5 * (med + d[mid - 1]);
    }
    return std::max(med, 1e-6);
}

namespace {

// A_ij = (H M H)_ij, i.e. M with row means, column means and the grand mean
// removed.
Matrix center(const Matrix& m) {
    int n = m.rows;
    Vec row_mean(n, 0.0);
    double grand = 0.0;
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += m.at(i, j);
        row_mean[i] = s / n;
        grand += s;
    }
    grand /= static_cast<double>(n) * n;
    Matrix out(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            out.at(i, j) = m.at(i, j) - row_mean[i] - row_mean[j] + grand;
        }
    }
    return out;
}

}  // namespace

std::optional<HsicResult> hsic(const std::vector<Vec>& x_points, const std::vector<Vec>& z_points,
                               const HsicConfig& config, bool want_grad) {
    config.validate();
    if (x_points.size() != z_points.size()) throw ShapeError("hsic: sample size mismatch");
    int n = static_cast<int>(x_points.size());
    if (n < 4) return std::nullopt;

    HsicResult res;
    if (config.bandwidth == HsicConfig::Bandwidth::fixed) {
        res.sigma_x = config.sigma;
        res.sigma_z = config.sigma;
    } else {
        res.sigma_x = std::max(config.median_scale * median_bandwidth(x_points), 1e-6);
        res.sigma_z = std::max(config.median_scale * median_bandwidth(z_points), 1e-6);
    }

    Matrix u = gaussian_kernel_matrix(x_points, res.sigma_x);
    Matrix v = gaussian_kernel_matrix(z_points, res.sigma_z);
    Matrix a = center(u);  // Tr(U H V H) = sum_ij (HUH)_ij V_ij

    double scale = 1.0 / (static_cast<double>(n - 1) * (n - 1));
    double trace = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) trace += a.at(i, j) * v.at(i, j);
    }
    res.value = scale * trace;

    if (want_grad) {
        // dI/dz_i = sum_j 2 A_ij V_ij (z_j - z_i) / sigma_z^2, sigma held fixed.
        int dim = static_cast<int>(z_points[0].size());
        double inv_s2 = 1.0 / (res.sigma_z * res.sigma_z);
        res.grad_z.assign(n, Vec(dim, 0.0));
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                double w = 2.0 * scale * a.at(i, j) * v.at(i, j) * inv_s2;
                for (int k = 0; k < dim; ++k) {
                    res.grad_z[i][k] += w * (z_points[j][k] - z_points[i][k]);
                }
            }
        }
    }
    return res;
}

MiCalibration mi_calibration_loss(const Vec& per_domain_hsic, double beta) {
    if (per_domain_hsic.empty()) throw ShapeError("mi_calibration_loss: no domains");
    int k = static_cast<int>(per_domain_hsic.size());
    double mean = 0.0;
    for (double v : per_domain_hsic) mean += v;
    mean /= k;
    double var = 0.0;
    for (double v : per_domain_hsic) var += (v - mean) * (v - mean);
    var /= k;

    MiCalibration out;
    out.value = var - beta * mean;
    out.grad.resize(k);
    for (int i = 0; i < k; ++i) {
        out.grad[i] = 2.0 * (per_domain_hsic[i] - mean) / k - beta / k;
    }
    return out;
}

}  // namespace unitok
