#include "unitok/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace unitok {

double token_entropy(const TokenTable& table) {
    if (table.rows.empty()) throw ShapeError("token_entropy: no tokens");
    std::map<std::vector<int>, long> counts;
    for (const auto& row : table.rows) counts[row.token] += 1;
    double n = static_cast<double>(table.rows.size());
    double h = 0.0;
    for (const auto& [token, c] : counts) {
        double p = c / n;
        h -= p * std::log2(p);
    }
    return h;
}

namespace {

const Vec& token_quantization(const UnitokModel::ItemForward& fwd, bool baseline) {
    return baseline ? fwd.baseline_rq.quantized : fwd.moe.expert_rq.front().quantized;
}

}  // namespace

double quantization_error(const UnitokModel& model, const Dataset& ds) {
    if (ds.records.empty()) throw ShapeError("quantization_error: empty dataset");
    Vec per_item(ds.records.size());
    parallel_for(ds.records.size(), [&](size_t i) {
        auto fwd = model.forward_item(ds.records[i].embedding);
        per_item[i] = squared_distance(fwd.z, token_quantization(fwd, model.baseline));
    });
    double s = 0.0;
    for (double v : per_item) s += v;
    return s / per_item.size();
}

ParamCounts count_parameters(const UnitokModel& model) {
    ParamCounts pc;
    pc.autoencoder = model.ae.encoder.param_count() + model.ae.decoder.param_count();
    for (const auto& s : model.stacks) pc.codebooks += s.param_count();
    if (!model.baseline) pc.router = model.router.param_count();
    pc.total = pc.autoencoder + pc.codebooks + pc.router;
    return pc;
}

double deployment_ratio(const ModelConfig& cfg, int k_domains) {
    size_t ae = 0;
    std::vector<int> dims;
    dims.push_back(cfg.d_in);
    dims.insert(dims.end(), cfg.enc_hidden.begin(), cfg.enc_hidden.end());
    dims.push_back(cfg.d_latent);
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        ae += static_cast<size_t>(dims[i]) * dims[i + 1] + dims[i + 1];  // encoder
        ae += static_cast<size_t>(dims[i + 1]) * dims[i] + dims[i];      // mirrored decoder
    }
    size_t stack = static_cast<size_t>(cfg.levels) * cfg.codebook_size * cfg.d_latent;
    size_t router = static_cast<size_t>(k_domains) * cfg.d_latent + k_domains;
    double separate = static_cast<double>(k_domains) * (ae + stack);
    double unified = static_cast<double>(ae) + static_cast<double>(k_domains + 1) * stack + router;
    return separate / unified;
}

namespace {

EvalReport build_report(const UnitokModel& model, const Dataset& ds, const HsicConfig& hsic_cfg) {
    if (ds.records.empty()) throw ShapeError("eval: empty dataset");
    if (ds.dim != model.ae.d_in()) {
        throw ShapeError("eval: dataset dim " + std::to_string(ds.dim) +
                         " does not match model dim " + std::to_string(model.ae.d_in()));
    }
    EvalReport rep;

    TokenTable table = tokenize_dataset(model, ds);
    rep.token_entropy_bits = token_entropy(table);
    rep.collision_rate = table.collision_rate;
    rep.params = count_parameters(model);

    const int n_domains = ds.num_domains();
    const int n_stacks = static_cast<int>(model.stacks.size());
    std::vector<std::vector<std::vector<long>>> usage(
        n_stacks, std::vector<std::vector<long>>(model.cfg.levels));
    for (int s = 0; s < n_stacks; ++s) {
        for (int l = 0; l < model.cfg.levels; ++l) {
            usage[s][l].assign(model.stacks[s].codebook_size(), 0);
        }
    }

    Vec domain_rec(n_domains, 0.0);
    Vec qerr(ds.records.size());
    std::vector<Vec> gate_sum(n_domains, Vec(model.baseline ? 0 : model.n_experts, 0.0));
    std::vector<Vec> share(n_domains, Vec(model.baseline ? 0 : model.n_experts, 0.0));

    for (size_t i = 0; i < ds.records.size(); ++i) {
        const auto& rec = ds.records[i];
        auto fwd = model.forward_item(rec.embedding);
        qerr[i] = squared_distance(fwd.z, token_quantization(fwd, model.baseline));
        domain_rec[rec.domain] += squared_distance(rec.embedding, fwd.x_hat);
        if (model.baseline) {
            for (int l = 0; l < model.cfg.levels; ++l) usage[0][l][fwd.baseline_rq.indices[l]] += 1;
        } else {
            for (size_t s = 0; s < fwd.moe.gate.selected.size(); ++s) {
                int k = fwd.moe.gate.selected[s];
                for (int l = 0; l < model.cfg.levels; ++l) {
                    usage[k][l][fwd.moe.expert_rq[s].indices[l]] += 1;
                }
            }
            for (int l = 0; l < model.cfg.levels; ++l) {
                usage[n_stacks - 1][l][fwd.moe.shared_rq.indices[l]] += 1;
            }
            axpy(1.0, fwd.moe.gate.masked, gate_sum[rec.domain]);
            share[rec.domain][fwd.moe.gate.selected[0]] += 1.0;
        }
    }

    rep.quantization_mse = 0.0;
    for (double v : qerr) rep.quantization_mse += v;
    rep.quantization_mse /= qerr.size();

    auto hsic_vals = hsic_snapshot(model, ds, hsic_cfg);
    double lo = 0.0, hi = 0.0;
    for (int d = 0; d < n_domains; ++d) {
        EvalReport::DomainStats dst;
        dst.domain = ds.domain_map[d];
        dst.token_count = ds.by_domain[d].size();
        dst.recon_mse = ds.by_domain[d].empty() ? 0.0 : domain_rec[d] / ds.by_domain[d].size();
        dst.hsic = hsic_vals[d];
        if (d == 0 || dst.recon_mse < lo) lo = dst.recon_mse;
        if (d == 0 || dst.recon_mse > hi) hi = dst.recon_mse;
        rep.per_domain.push_back(dst);
        if (!model.baseline && !ds.by_domain[d].empty()) {
            for (double& v : gate_sum[d]) v /= ds.by_domain[d].size();
            for (double& v : share[d]) v /= ds.by_domain[d].size();
        }
    }
    rep.loss_spread = hi - lo;
    rep.gate_matrix = std::move(gate_sum);
    rep.routing_share = std::move(share);

    Vec present;
    for (const auto& v : hsic_vals) {
        if (v) present.push_back(*v);
    }
    if (!present.empty()) {
        double mean = 0.0;
        for (double v : present) mean += v;
        mean /= present.size();
        for (double v : present) rep.mi_variance += (v - mean) * (v - mean);
        rep.mi_variance /= present.size();
    }

    for (int s = 0; s < n_stacks; ++s) {
        Vec per_level;
        for (int l = 0; l < model.cfg.levels; ++l) {
            per_level.push_back(usage_entropy_bits(usage[s][l]));
        }
        rep.usage_entropy_bits.push_back(std::move(per_level));
    }
    return rep;
}

}  // namespace

EvalReport eval_report(const UnitokModel& model, const Dataset& ds, const HsicConfig& hsic_cfg) {
    return build_report(model, ds, hsic_cfg);
}

EvalReport zero_shot_eval(const UnitokModel& model, const Dataset& unseen,
                          const HsicConfig& hsic_cfg) {
    if (unseen.records.empty()) throw ShapeError("zero_shot_eval: empty dataset");
    return build_report(model, unseen, hsic_cfg);
}

ComparisonReport compare_against_baseline(const Dataset& ds, const TrainConfig& cfg) {
    ComparisonReport rep;

    TrainResult full = train(ds, cfg);
    TrainResult base = train_baseline_single_codebook(ds, cfg);
    TrainConfig no_mi = cfg;
    no_mi.lambda_mi = 0.0;
    TrainResult ablated = train(ds, no_mi);

    EvalReport full_rep = eval_report(full.model, ds, cfg.hsic);
    EvalReport base_rep = eval_report(base.model, ds, cfg.hsic);
    EvalReport ablated_rep = eval_report(ablated.model, ds, cfg.hsic);

    rep.entropy_model = full_rep.token_entropy_bits;
    rep.entropy_baseline = base_rep.token_entropy_bits;
    rep.entropy_pass = rep.entropy_model > rep.entropy_baseline;

    rep.quant_model = full_rep.quantization_mse;
    rep.quant_baseline = base_rep.quantization_mse;
    rep.quant_pass = rep.quant_model <= rep.quant_baseline;

    rep.mi_var_with = full_rep.mi_variance;
    rep.mi_var_without = ablated_rep.mi_variance;
    rep.spread_with = full_rep.loss_spread;
    rep.spread_without = ablated_rep.loss_spread;
    rep.balance_pass =
        rep.mi_var_with < rep.mi_var_without && rep.spread_with < rep.spread_without;

    rep.collision_model = full_rep.collision_rate;
    rep.collision_baseline = base_rep.collision_rate;
    return rep;
}

}  // namespace unitok
