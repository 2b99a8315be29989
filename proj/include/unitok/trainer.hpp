#pragma once

// Composes the training objective (reconstruction + quantization + MI
// calibration), runs the optimization loop, and records per-domain
// diagnostics.

#include <optional>
#include <vector>

#include "unitok/data.hpp"
#include "unitok/hsic.hpp"
#include "unitok/model.hpp"

namespace unitok {

struct TrainDiverged : NumericError {
    using NumericError::NumericError;
};

enum class BaselineMode { capacity_matched, parameter_matched };

struct TrainConfig {
    ModelConfig arch;

    double lambda_rq = 1.0;
    double lambda_mi = 0.03;
    double alpha = 0.25;  // commitment weight inside the quantization loss
    // Informativeness weight inside the MI loss, sized so the variance and
    // informativeness gradients are same-order on the reference benchmark.
    double beta = 0.03;
    double lr = 1e-3;

    int epochs = 200;
    int warmup_epochs = 20;  // autoencoder-only phase before codebooks exist
    int batch_size = 256;
    int min_per_domain = 16;
    uint64_t seed = 42;

    HsicConfig hsic;
    bool dead_code_resets = true;
    long dead_code_threshold = 1;
    bool force_domain_routing = false;
    BaselineMode baseline_mode = BaselineMode::capacity_matched;

    void validate(int n_domains) const;
};

// Epoch-level reservoir of the residuals each codebook level quantized, used
// to restart dead codes.
struct ResidualPools {
    size_t cap = 1024;
    // [stack][level] -> sampled residuals; counts track totals seen.
    std::vector<std::vector<std::vector<Vec>>> pools;
    std::vector<std::vector<size_t>> seen;
    Rng rng{0};

    void reset(size_t n_stacks, size_t n_levels, Rng pool_rng);
    void note(size_t stack, size_t level, const Vec& r);
};

struct LossBreakdown {
    double total = 0.0;
    double rec = 0.0;  // mean over items of |x - x_hat|^2
    double rq = 0.0;   // mean over items, summed over active stacks and levels
    double mi = 0.0;   // Var[I_k] - beta E[I_k] over domains present in the batch
    int items = 0;

    Vec per_domain_rec_sum;           // indexed by dense domain
    std::vector<int> per_domain_count;
    std::vector<Vec> gate_sum;        // per dense domain, summed masked gates

    struct DomainHsic {
        int domain;
        double value;
    };
    std::vector<DomainHsic> hsic_by_domain;
};

// Forward + loss over a batch; when accumulate_grads is set, fills the
// model's gradient buffers (optimizer step not included). Gradient routing:
// codes receive only the alignment term, the encoder path receives the
// commitment term and the straight-through reconstruction path, and the
// router receives d(z_hat)/dG_k = q_k. Throws TrainDiverged on a non-finite
// loss.
LossBreakdown total_loss(const Batch& batch, UnitokModel& model, const TrainConfig& cfg,
                         bool accumulate_grads, ResidualPools* pools = nullptr);

struct EpochStats {
    int epoch = 0;
    double total = 0.0;
    double rec = 0.0;
    double rq = 0.0;
    double mi = 0.0;
    Vec per_domain_rec;                        // mean over the epoch's batches
    std::vector<std::optional<double>> per_domain_hsic;  // end-of-epoch snapshot
    double hsic_var = 0.0;
    std::vector<Vec> usage_entropy_bits;       // [stack][level]
    std::vector<Vec> gate_matrix;              // [domain][expert], mean masked gate
    int dead_code_resets = 0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
};

struct TrainResult {
    UnitokModel model;
    TrainReport report;
};

// Warm-up the autoencoder, initialize expert stacks from per-domain latents
// (shared stack from the pool), then optimize the full objective with Adam.
// Deterministic in the seed.
TrainResult train(const Dataset& ds, const TrainConfig& cfg);

// Same pipeline with a single codebook stack, no router, no shared/specific
// split, and the MI term off. Capacity-matched keeps the stack at the
// configured size; parameter-matched scales it to (K+1) times that.
TrainResult train_baseline_single_codebook(const Dataset& ds, const TrainConfig& cfg);

// Encoder latents for every record, in dataset order.
std::vector<Vec> encode_all(const UnitokModel& model, const Dataset& ds);

// Per-domain HSIC between embeddings and current latents on an evenly strided
// subsample (cap per config); nullopt for domains with fewer than 4 points.
std::vector<std::optional<double>> hsic_snapshot(const UnitokModel& model, const Dataset& ds,
                                                 const HsicConfig& cfg);

double usage_entropy_bits(const std::vector<long>& counts);

}  // namespace unitok
