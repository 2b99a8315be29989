#pragma once

// Synthetic multi-domain embedding generation, JSONL / binary ingestion, and
// stratified mini-batch sampling.

#include <string>
#include <vector>

#include "unitok/numeric.hpp"

namespace unitok {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ItemRecord {
    int domain = 0;  // dense id in [0, K)
    std::string item_id;
    Vec embedding;
};

struct Dataset {
    int dim = 0;
    std::vector<ItemRecord> records;           // file / generation order
    std::vector<std::vector<int>> by_domain;   // dense domain -> record positions
    std::vector<int> domain_map;               // dense id -> original id

    int num_domains() const { return static_cast<int>(by_domain.size()); }
    size_t total_items() const { return records.size(); }
    // Recomputes by_domain from records; call after assembling records manually.
    void rebuild_index();
};

struct Batch {
    std::vector<ItemRecord> records;
    std::vector<std::vector<int>> per_domain_index;  // dense domain -> batch positions
};

// Each domain is a Gaussian mixture: a mean on a sphere of radius
// `separation`, `subclusters` centers around it at radius 2*intra_std, and
// per-item noise of expected norm intra_std. Domains get a deterministic
// complexity spread (noise multiplier 0.6..1.4 across k) so the mixture is
// heterogeneous. Embeddings are L2-normalized at the end.
Dataset gen_synthetic(int K, int items_per_domain, int d, double separation,
                      double intra_std, uint64_t seed, int subclusters = 8);

// One JSON object per line: {"domain": int, "item_id": str, "embedding": [..]}.
// Domains are re-indexed densely; the original ids are kept in domain_map.
Dataset load_jsonl(const std::string& path);
void save_jsonl(const Dataset& ds, const std::string& path);

// Compact binary format: magic "UTOK", u32 version=1, u32 K, u32 d, u64 count,
// then per record u32 domain, u16 id length, id bytes, d little-endian f64.
Dataset load_binary(const std::string& path);
void save_binary(const Dataset& ds, const std::string& path);

// Sniffs the magic and dispatches to the right loader.
Dataset load_dataset(const std::string& path);

// Stratified sample: at least min_per_domain records from every domain, the
// remaining slots apportioned to domains proportionally to their size
// (largest-remainder, deterministic), items drawn uniformly within a domain.
Batch sample_batch(const Dataset& ds, int batch_size, int min_per_domain, Rng& rng);

}  // namespace unitok
