#pragma once

// The full tokenizer model: shared autoencoder, router, and K expert codebook
// stacks plus one shared stack — or the single-stack baseline variant.

#include <map>
#include <string>
#include <vector>

#include "unitok/autoencoder.hpp"
#include "unitok/codebook.hpp"
#include "unitok/data.hpp"
#include "unitok/moe.hpp"

namespace unitok {

struct ModelConfig {
    int d_in = 768;
    std::vector<int> enc_hidden = {256, 96};
    int d_latent = 32;
    int levels = 4;
    int codebook_size = 256;
    int top_n = 1;

    void validate() const;
};

struct UnitokModel {
    ModelConfig cfg;
    bool baseline = false;
    int n_experts = 0;  // K; 0 for the baseline
    Autoencoder ae;
    LinearLayer router;               // unused for the baseline
    std::vector<CodebookStack> stacks;  // K experts + shared, or 1 for the baseline
    std::vector<int> domain_map;       // dense domain id -> original id at training time
    uint64_t seed = 0;

    // Stacks start zeroed; training initializes them from warm latents.
    static UnitokModel make(const ModelConfig& cfg, int n_experts, Rng& rng);
    static UnitokModel make_baseline(const ModelConfig& cfg, int codebook_size, Rng& rng);

    // Parameter tensors in canonical order: encoder layers (W then b), decoder
    // layers, router (unless baseline), then stacks by level. The flat
    // parameter vector follows the same order.
    std::vector<TensorRef> tensors();
    size_t param_count() const;
    Vec param_vector() const;
    void set_param_vector(const Vec& p);
    void zero_grads();

    struct ItemForward {
        Vec z;
        Vec z_hat;
        Vec x_hat;
        MoeOutput moe;        // gate empty for the baseline
        RQResult baseline_rq;  // filled for the baseline
        SemanticToken token;
    };

    // Full read-only forward pass for one item.
    ItemForward forward_item(const Vec& x, int forced_expert = -1) const;
};

struct TokenTable {
    struct Row {
        int domain = 0;  // original id from the tokenized dataset
        std::string item_id;
        std::vector<int> token;
    };
    std::vector<Row> rows;
    size_t collision_items = 0;  // items sharing their full token with another item
    double collision_rate = 0.0;
};

TokenTable tokenize_dataset(const UnitokModel& model, const Dataset& ds);

}  // namespace unitok
