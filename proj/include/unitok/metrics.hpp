#pragma once

// Quantitative evaluation: token entropy, quantization error, MI balance
// versus per-domain loss spread, collision rate, codebook usage, gate
// specialization, and parameter accounting.

#include <optional>
#include <string>
#include <vector>

#include "unitok/model.hpp"
#include "unitok/trainer.hpp"

namespace unitok {

struct ParamCounts {
    size_t autoencoder = 0;
    size_t codebooks = 0;
    size_t router = 0;
    size_t total = 0;
};

struct EvalReport {
    double token_entropy_bits = 0.0;
    double quantization_mse = 0.0;  // mean |z - z_hat|^2 in latent space

    struct DomainStats {
        int domain = 0;  // original id
        double recon_mse = 0.0;
        std::optional<double> hsic;
        size_t token_count = 0;
    };
    std::vector<DomainStats> per_domain;

    double mi_variance = 0.0;
    double loss_spread = 0.0;  // max - min per-domain recon_mse
    double collision_rate = 0.0;
    std::vector<Vec> usage_entropy_bits;  // [stack][level]
    std::vector<Vec> gate_matrix;         // [domain][expert], mean masked gate
    std::vector<Vec> routing_share;       // [domain][expert], fraction of top-1 picks
    ParamCounts params;
};

// Shannon entropy (base 2) of the empirical distribution over distinct full
// tokens.
double token_entropy(const TokenTable& table);

// Mean squared distance between the latent and the quantization its token
// encodes: the top-gate expert's stack output for the mixture model, the
// single stack's output for the baseline.
double quantization_error(const UnitokModel& model, const Dataset& ds);

ParamCounts count_parameters(const UnitokModel& model);

// Parameter ratio of k separate single-stack deployments against one shared
// model with k experts: k*(AE + stack) / (AE + (k+1)*stacks + router).
double deployment_ratio(const ModelConfig& cfg, int k_domains);

EvalReport eval_report(const UnitokModel& model, const Dataset& ds, const HsicConfig& hsic_cfg);

// Tokenizes a dataset from domains unseen in training; no parameter updates.
EvalReport zero_shot_eval(const UnitokModel& model, const Dataset& unseen,
                          const HsicConfig& hsic_cfg);

// Trains the full model and the single-stack baseline on identical data and
// seed, plus a run with the MI term off, and checks the three structural
// claims: a larger-entropy token space, no worse quantization error, and MI
// calibration shrinking both the MI variance and the per-domain loss spread.
struct ComparisonReport {
    double entropy_model = 0.0;
    double entropy_baseline = 0.0;
    bool entropy_pass = false;

    double quant_model = 0.0;
    double quant_baseline = 0.0;
    bool quant_pass = false;

    double mi_var_with = 0.0;
    double mi_var_without = 0.0;
    double spread_with = 0.0;
    double spread_without = 0.0;
    bool balance_pass = false;

    double collision_model = 0.0;
    double collision_baseline = 0.0;
};

ComparisonReport compare_against_baseline(const Dataset& ds, const TrainConfig& cfg);

}  // namespace unitok
