#pragma once

// Token mixture-of-experts: a softmax router over domain experts, sparse
// top-N selection, an always-active shared expert, and token assembly.

#include <vector>

#include "unitok/codebook.hpp"
#include "unitok/numeric.hpp"

namespace unitok {

struct GateDecision {
    Vec probs;                  // full softmax over K experts
    std::vector<int> selected;  // top-N expert ids, descending prob, ties by index
    Vec masked;                 // probs on selected experts, 0 elsewhere; not renormalized
};

struct SemanticToken {
    std::vector<int> code_indices;  // from the highest-gate selected expert
    std::vector<int> expert_ids;    // selected experts in gate order

    std::vector<int> flat() const;
    size_t length() const { return code_indices.size() + expert_ids.size(); }
};

struct MoeOutput {
    Vec z_hat;
    GateDecision gate;
    std::vector<RQResult> expert_rq;  // one per selected expert, gate order
    RQResult shared_rq;
    SemanticToken token;
};

GateDecision route(const LinearLayer& router, const Vec& z, int n_active);
// Forces the given expert into the top slot; remaining slots by gate order.
GateDecision route_forced(const LinearLayer& router, const Vec& z, int n_active, int expert);

SemanticToken assemble_token(const MoeOutput& out);

// z_hat = sum_selected G_k q_k(z) + q_shared(z), where q is residual
// quantization through the expert's stack. `stacks` holds the K expert stacks
// followed by the shared stack. Read-only; usage counting is the caller's
// concern. forced_expert >= 0 pins the top selection (ablation path).
MoeOutput moe_forward(const LinearLayer& router, const std::vector<CodebookStack>& stacks,
                      const Vec& z, int n_active, int forced_expert = -1);

}  // namespace unitok
