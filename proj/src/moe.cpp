#include "unitok/moe.hpp"

#include <algorithm>
#include <numeric>

namespace unitok {

std::vector<int> SemanticToken::flat() const {
    std::vector<int> v = code_indices;
    v.insert(v.end(), expert_ids.begin(), expert_ids.end());
    return v;
}

namespace {

GateDecision gate_from_probs(Vec probs, int n_active, int forced_expert) {
    int k = static_cast<int>(probs.size());
    int n = std::min(n_active, k);
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (probs[a] != probs[b]) return probs[a] > probs[b];
        return a < b;
    });
    GateDecision g;
    g.selected.reserve(n);
    if (forced_expert >= 0) {
        g.selected.push_back(forced_expert);
        for (int i = 0; i < k && static_cast<int>(g.selected.size()) < n; ++i) {
            if (order[i] != forced_expert) g.selected.push_back(order[i]);
        }
    } else {
        g.selected.assign(order.begin(), order.begin() + n);
    }
    g.masked.assign(k, 0.0);
    for (int idx : g.selected) g.masked[idx] = probs[idx];
    g.probs = std::move(probs);
    return g;
}

}  // namespace

GateDecision route(const LinearLayer& router, const Vec& z, int n_active) {
    return gate_from_probs(softmax(router.forward(z)), n_active, -1);
}

GateDecision route_forced(const LinearLayer& router, const Vec& z, int n_active, int expert) {
    if (expert < 0 || expert >= router.out_dim()) throw ShapeError("route_forced: bad expert id");
    return gate_from_probs(softmax(router.forward(z)), n_active, expert);
}

SemanticToken assemble_token(const MoeOutput& out) {
    SemanticToken t;
    t.code_indices = out.expert_rq.front().indices;
    t.expert_ids = out.gate.selected;
    return t;
}

MoeOutput moe_forward(const LinearLayer& router, const std::vector<CodebookStack>& stacks,
                      const Vec& z, int n_active, int forced_expert) {
    if (stacks.size() < 2) throw ShapeError("moe_forward: need expert stacks plus shared stack");
    if (n_active < 1) throw ShapeError("moe_forward: n_active must be at least 1");
    MoeOutput out;
    out.gate = forced_expert >= 0 ? route_forced(router, z, n_active, forced_expert)
                                  : route(router, z, n_active);
    out.z_hat.assign(z.size(), 0.0);
    for (int k : out.gate.selected) {
        RQResult rq = rq_quantize(stacks[k], z);
        axpy(out.gate.masked[k], rq.quantized, out.z_hat);
        out.expert_rq.push_back(std::move(rq));
    }
    out.shared_rq = rq_quantize(stacks.back(), z);
    axpy(1.0, out.shared_rq.quantized, out.z_hat);
    out.token = assemble_token(out);
    return out;
}

}  // namespace unitok
