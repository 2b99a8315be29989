#include "unitok/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace unitok {

void TrainConfig::validate(int n_domains) const {
    arch.validate();
    hsic.validate();
    if (lambda_rq < 0.0 || lambda_mi < 0.0) throw ShapeError("config: lambdas must be >= 0");
    if (epochs < 0 || warmup_epochs < 0) throw ShapeError("config: negative epoch count");
    if (batch_size < 1) throw ShapeError("config: batch_size must be positive");
    if (n_domains >= 1 && batch_size < n_domains * min_per_domain) {
        throw ShapeError("config: batch_size " + std::to_string(batch_size) +
                         " cannot hold min_per_domain " + std::to_string(min_per_domain) +
                         " items from " + std::to_string(n_domains) + " domains");
    }
}

void ResidualPools::reset(size_t n_stacks, size_t n_levels, Rng pool_rng) {
    pools.assign(n_stacks, std::vector<std::vector<Vec>>(n_levels));
    seen.assign(n_stacks, std::vector<size_t>(n_levels, 0));
    rng = pool_rng;
}

void ResidualPools::note(size_t stack, size_t level, const Vec& r) {
    auto& pool = pools[stack][level];
    size_t n = ++seen[stack][level];
    if (pool.size() < cap) {
        pool.push_back(r);
    } else {
        size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(n)));
        if (j < cap) pool[j] = r;
    }
}

namespace {

struct ItemState {
    Mlp::Trace enc_tr;
    Mlp::Trace dec_tr;
    Vec z;
    Vec z_hat;
    Vec x_hat;
    GateDecision gate;
    std::vector<RQResult> sel_rq;  // per selected expert, gate order
    RQResult shared_rq;
    RQResult baseline_rq;
    double rec = 0.0;
    double rq = 0.0;
    Vec dz;
};

}  // namespace

LossBreakdown total_loss(const Batch& batch, UnitokModel& model, const TrainConfig& cfg,
                         bool accumulate_grads, ResidualPools* pools) {
    const int n = static_cast<int>(batch.records.size());
    if (n == 0) throw ShapeError("total_loss: empty batch");
    const int n_domains = static_cast<int>(batch.per_domain_index.size());
    const double inv_n = 1.0 / n;

    LossBreakdown bd;
    bd.items = n;
    bd.per_domain_rec_sum.assign(n_domains, 0.0);
    bd.per_domain_count.assign(n_domains, 0);
    bd.gate_sum.assign(n_domains, Vec(model.baseline ? 0 : model.n_experts, 0.0));

    std::vector<ItemState> states(n);

    // Forward.
    for (int i = 0; i < n; ++i) {
        const ItemRecord& rec = batch.records[i];
        ItemState& st = states[i];
        st.z = model.ae.encode(rec.embedding, st.enc_tr);
        std::vector<std::pair<CodebookStack*, const RQResult*>> active;
        if (model.baseline) {
            st.baseline_rq = rq_quantize(model.stacks[0], st.z);
            st.z_hat = st.baseline_rq.quantized;
            active.push_back({&model.stacks[0], &st.baseline_rq});
        } else {
            int forced = cfg.force_domain_routing && rec.domain < model.n_experts ? rec.domain : -1;
            MoeOutput moe = moe_forward(model.router, model.stacks, st.z, cfg.arch.top_n, forced);
            st.gate = std::move(moe.gate);
            st.sel_rq = std::move(moe.expert_rq);
            st.shared_rq = std::move(moe.shared_rq);
            st.z_hat = std::move(moe.z_hat);
            for (size_t s = 0; s < st.gate.selected.size(); ++s) {
                active.push_back({&model.stacks[st.gate.selected[s]], &st.sel_rq[s]});
            }
            active.push_back({&model.stacks.back(), &st.shared_rq});
            axpy(1.0, st.gate.masked, bd.gate_sum[rec.domain]);
        }
        for (auto& [stack, rq] : active) {
            stack->note_usage(*rq);
            st.rq += rq_loss(*rq, cfg.alpha);
            if (pools) {
                size_t stack_idx = stack - model.stacks.data();
                for (int l = 0; l < stack->num_levels(); ++l) {
                    pools->note(stack_idx, l, rq->residuals[l]);
                }
            }
        }
        st.x_hat = model.ae.decode(st.z_hat, st.dec_tr);
        st.rec = squared_distance(rec.embedding, st.x_hat);
        bd.rec += st.rec * inv_n;
        bd.rq += st.rq * inv_n;
        bd.per_domain_rec_sum[rec.domain] += st.rec;
        bd.per_domain_count[rec.domain] += 1;
    }

    // Per-domain HSIC on the batch (capped), then the calibration loss.
    std::vector<std::vector<int>> hsic_members(n_domains);
    std::vector<std::optional<HsicResult>> hsic_res(n_domains);
    Vec hsic_values;
    std::vector<int> hsic_domains;
    const bool want_mi = !model.baseline && cfg.lambda_mi != 0.0;
    if (want_mi) {
        for (int d = 0; d < n_domains; ++d) {
            const auto& members = batch.per_domain_index[d];
            int m = std::min<int>(static_cast<int>(members.size()), cfg.hsic.max_points_per_domain);
            if (m < 4) continue;
            hsic_members[d].assign(members.begin(), members.begin() + m);
            std::vector<Vec> xs, zs;
            xs.reserve(m);
            zs.reserve(m);
            for (int idx : hsic_members[d]) {
                xs.push_back(batch.records[idx].embedding);
                zs.push_back(states[idx].z);
            }
            hsic_res[d] = hsic(xs, zs, cfg.hsic, accumulate_grads);
            if (hsic_res[d]) {
                hsic_values.push_back(hsic_res[d]->value);
                hsic_domains.push_back(d);
                bd.hsic_by_domain.push_back({d, hsic_res[d]->value});
            }
        }
    }
    MiCalibration mi;
    if (!hsic_values.empty()) {
        mi = mi_calibration_loss(hsic_values, cfg.beta);
        bd.mi = mi.value;
    }

    bd.total = bd.rec + cfg.lambda_rq * bd.rq + cfg.lambda_mi * bd.mi;
    if (!std::isfinite(bd.total)) {
        std::ostringstream os;
        os << "non-finite loss: total=" << bd.total << " rec=" << bd.rec << " rq=" << bd.rq
           << " mi=" << bd.mi;
        throw TrainDiverged(os.str());
    }
    if (!accumulate_grads) return bd;

    // Backward. Reconstruction crosses the quantizer by straight-through:
    // z_hat is treated as (sum_sel G_k + 1) z plus constants, so the encoder
    // sees the gate-scaled gradient and codes see nothing from this path.
    for (int i = 0; i < n; ++i) {
        const ItemRecord& rec = batch.records[i];
        ItemState& st = states[i];
        Vec g_xhat = recon_loss_grad(rec.embedding, st.x_hat);
        for (double& v : g_xhat) v *= inv_n;
        Vec g_zhat = model.ae.decoder.backward(st.dec_tr, g_xhat);

        if (model.baseline) {
            st.dz = g_zhat;
            rq_loss_backward(model.stacks[0], st.baseline_rq, cfg.alpha, cfg.lambda_rq * inv_n,
                             st.dz);
        } else {
            double gate_total = 0.0;
            for (int k : st.gate.selected) gate_total += st.gate.masked[k];
            st.dz.assign(st.z.size(), 0.0);
            axpy(gate_total + 1.0, g_zhat, st.dz);

            // Router: d(z_hat)/dG_k = q_k for selected experts, then the
            // softmax Jacobian over all logits.
            const int K = model.n_experts;
            Vec dl_dp(K, 0.0);
            for (size_t s = 0; s < st.gate.selected.size(); ++s) {
                dl_dp[st.gate.selected[s]] = dot(g_zhat, st.sel_rq[s].quantized);
            }
            double inner = 0.0;
            for (int k = 0; k < K; ++k) inner += dl_dp[k] * st.gate.probs[k];
            Vec ds(K);
            for (int k = 0; k < K; ++k) ds[k] = st.gate.probs[k] * (dl_dp[k] - inner);
            Vec dz_router = model.router.backward(st.z, ds);
            axpy(1.0, dz_router, st.dz);

            for (size_t s = 0; s < st.gate.selected.size(); ++s) {
                rq_loss_backward(model.stacks[st.gate.selected[s]], st.sel_rq[s], cfg.alpha,
                                 cfg.lambda_rq * inv_n, st.dz);
            }
            rq_loss_backward(model.stacks.back(), st.shared_rq, cfg.alpha, cfg.lambda_rq * inv_n,
                             st.dz);
        }
    }

    // MI calibration reaches the encoder only.
    for (size_t di = 0; di < hsic_domains.size(); ++di) {
        int d = hsic_domains[di];
        const HsicResult& hr = *hsic_res[d];
        double w = cfg.lambda_mi * mi.grad[di];
        for (size_t m = 0; m < hsic_members[d].size(); ++m) {
            axpy(w, hr.grad_z[m], states[hsic_members[d][m]].dz);
        }
    }

    for (int i = 0; i < n; ++i) {
        model.ae.encoder.backward(states[i].enc_tr, states[i].dz);
    }
    return bd;
}

std::vector<Vec> encode_all(const UnitokModel& model, const Dataset& ds) {
    std::vector<Vec> out(ds.records.size());
    parallel_for(ds.records.size(), [&](size_t i) {
        out[i] = model.ae.encode(ds.records[i].embedding);
    });
    return out;
}

std::vector<std::optional<double>> hsic_snapshot(const UnitokModel& model, const Dataset& ds,
                                                 const HsicConfig& cfg) {
    std::vector<std::optional<double>> out(ds.num_domains());
    for (int d = 0; d < ds.num_domains(); ++d) {
        const auto& members = ds.by_domain[d];
        int n = static_cast<int>(members.size());
        int m = std::min(n, cfg.max_points_per_domain);
        if (m < 4) continue;
        std::vector<Vec> xs, zs;
        xs.reserve(m);
        zs.reserve(m);
        for (int j = 0; j < m; ++j) {
            // Evenly strided subsample; identity when m == n.
            int pos = members[static_cast<int>(static_cast<long>(j) * n / m)];
            xs.push_back(ds.records[pos].embedding);
            zs.push_back(model.ae.encode(ds.records[pos].embedding));
        }
        auto res = hsic(xs, zs, cfg, false);
        if (res) out[d] = res->value;
    }
    return out;
}

double usage_entropy_bits(const std::vector<long>& counts) {
    long total = 0;
    for (long c : counts) total += c;
    if (total <= 0) return 0.0;
    double h = 0.0;
    for (long c : counts) {
        if (c <= 0) continue;
        double p = static_cast<double>(c) / total;
        h -= p * std::log2(p);
    }
    return h;
}

namespace {

double population_variance(const std::vector<std::optional<double>>& values) {
    Vec present;
    for (const auto& v : values) {
        if (v) present.push_back(*v);
    }
    if (present.empty()) return 0.0;
    double mean = 0.0;
    for (double v : present) mean += v;
    mean /= present.size();
    double var = 0.0;
    for (double v : present) var += (v - mean) * (v - mean);
    return var / present.size();
}

// Autoencoder-only objective for the warm-up phase.
double ae_only_batch(const Batch& batch, UnitokModel& model) {
    const int n = static_cast<int>(batch.records.size());
    const double inv_n = 1.0 / n;
    double rec = 0.0;
    for (const auto& item : batch.records) {
        Mlp::Trace enc_tr, dec_tr;
        Vec z = model.ae.encode(item.embedding, enc_tr);
        Vec x_hat = model.ae.decode(z, dec_tr);
        rec += squared_distance(item.embedding, x_hat) * inv_n;
        Vec g_xhat = recon_loss_grad(item.embedding, x_hat);
        for (double& v : g_xhat) v *= inv_n;
        Vec g_z = model.ae.decoder.backward(dec_tr, g_xhat);
        model.ae.encoder.backward(enc_tr, g_z);
    }
    return rec;
}

std::vector<TensorRef> ae_tensors(UnitokModel& model) {
    std::vector<TensorRef> out;
    for (auto& t : model.tensors()) {
        if (t.name.rfind("enc.", 0) == 0 || t.name.rfind("dec.", 0) == 0) out.push_back(t);
    }
    return out;
}

TrainResult run_training(const Dataset& ds, const TrainConfig& cfg, bool baseline) {
    cfg.validate(ds.num_domains());
    if (ds.num_domains() < 1) throw ShapeError("train: empty dataset");

    Rng rng(cfg.seed);
    ModelConfig arch = cfg.arch;
    arch.d_in = ds.dim;

    UnitokModel model;
    if (baseline) {
        int t = arch.codebook_size;
        if (cfg.baseline_mode == BaselineMode::parameter_matched) {
            t *= ds.num_domains() + 1;
        }
        model = UnitokModel::make_baseline(arch, t, rng);
    } else {
        model = UnitokModel::make(arch, ds.num_domains(), rng);
    }
    model.domain_map = ds.domain_map;
    model.seed = cfg.seed;

    const int batch_size = std::min<int>(cfg.batch_size, static_cast<int>(ds.total_items()));
    const int batches_per_epoch =
        static_cast<int>((ds.total_items() + batch_size - 1) / batch_size);

    // Phase 1: autoencoder warm-up so codebook initialization sees stable
    // latents.
    {
        Adam warm;
        warm.lr = cfg.lr;
        auto refs = ae_tensors(model);
        warm.init(refs);
        for (int e = 0; e < cfg.warmup_epochs; ++e) {
            for (int b = 0; b < batches_per_epoch; ++b) {
                Batch batch = sample_batch(ds, batch_size, cfg.min_per_domain, rng);
                ae_only_batch(batch, model);
                warm.step(refs);
            }
        }
    }

    // Phase 2: codebooks from the warm latents. Expert k starts on domain k's
    // latents; the shared stack starts on the pooled set.
    {
        std::vector<Vec> latents = encode_all(model, ds);
        if (baseline) {
            Rng krng = rng.fork(0x5EED);
            model.stacks[0] = init_stack_from_domain(latents, model.cfg.levels,
                                                     model.stacks[0].codebook_size(), krng);
        } else {
            for (int k = 0; k < ds.num_domains(); ++k) {
                std::vector<Vec> domain_latents;
                domain_latents.reserve(ds.by_domain[k].size());
                for (int pos : ds.by_domain[k]) domain_latents.push_back(latents[pos]);
                Rng krng = rng.fork(0x5EED + 1 + static_cast<uint64_t>(k));
                model.stacks[k] = init_stack_from_domain(domain_latents, model.cfg.levels,
                                                         model.cfg.codebook_size, krng);
            }
            Rng srng = rng.fork(0x5EED);
            model.stacks.back() = init_stack_from_domain(latents, model.cfg.levels,
                                                         model.cfg.codebook_size, srng);
        }
    }

    TrainConfig run_cfg = cfg;
    if (baseline) run_cfg.lambda_mi = 0.0;

    TrainResult result;
    Adam adam;
    adam.lr = cfg.lr;
    auto refs = model.tensors();
    adam.init(refs);
    Rng reset_rng = rng.fork(0xDEAD);

    ResidualPools pools;
    for (int e = 0; e < cfg.epochs; ++e) {
        pools.reset(model.stacks.size(), model.cfg.levels,
                    reset_rng.fork(0x9001 + static_cast<uint64_t>(e)));
        for (auto& s : model.stacks) s.reset_usage();

        EpochStats st;
        st.epoch = e + 1;
        st.per_domain_rec.assign(ds.num_domains(), 0.0);
        std::vector<int> domain_counts(ds.num_domains(), 0);
        std::vector<Vec> gate_sum(ds.num_domains(),
                                  Vec(baseline ? 0 : model.n_experts, 0.0));
        std::vector<int> mi_batches_by_domain(ds.num_domains(), 0);

        for (int b = 0; b < batches_per_epoch; ++b) {
            Batch batch = sample_batch(ds, batch_size, cfg.min_per_domain, rng);
            LossBreakdown bd = total_loss(batch, model, run_cfg, true, &pools);
            adam.step(refs);
            st.total += bd.total / batches_per_epoch;
            st.rec += bd.rec / batches_per_epoch;
            st.rq += bd.rq / batches_per_epoch;
            st.mi += bd.mi / batches_per_epoch;
            for (int d = 0; d < ds.num_domains(); ++d) {
                st.per_domain_rec[d] += bd.per_domain_rec_sum[d];
                domain_counts[d] += bd.per_domain_count[d];
                if (!baseline) axpy(1.0, bd.gate_sum[d], gate_sum[d]);
            }
        }
        for (int d = 0; d < ds.num_domains(); ++d) {
            if (domain_counts[d] > 0) st.per_domain_rec[d] /= domain_counts[d];
            if (!baseline && domain_counts[d] > 0) {
                for (double& v : gate_sum[d]) v /= domain_counts[d];
            }
        }
        st.gate_matrix = std::move(gate_sum);

        st.per_domain_hsic = hsic_snapshot(model, ds, cfg.hsic);
        st.hsic_var = population_variance(st.per_domain_hsic);
        for (const auto& s : model.stacks) {
            Vec per_level;
            for (const auto& lvl : s.usage) per_level.push_back(usage_entropy_bits(lvl));
            st.usage_entropy_bits.push_back(std::move(per_level));
        }

        if (cfg.dead_code_resets) {
            for (size_t s = 0; s < model.stacks.size(); ++s) {
                // Restart codes only in stacks with enough traffic to sample
                // from; rewriting a cold expert's codebook toward its handful
                // of visitors would erase its domain initialization.
                long seen = 0;
                for (long c : model.stacks[s].usage[0]) seen += c;
                if (seen < model.stacks[s].codebook_size()) {
                    model.stacks[s].reset_usage();
                    continue;
                }
                st.dead_code_resets += reset_dead_codes(model.stacks[s], pools.pools[s],
                                                        cfg.dead_code_threshold, reset_rng);
            }
        }

        std::printf("[epoch %3d] total=%.6f rec=%.6f rq=%.6f mi=%+.6f varI=%.3e resets=%d\n",
                    st.epoch, st.total, st.rec, st.rq, st.mi, st.hsic_var, st.dead_code_resets);
        std::fflush(stdout);
        result.report.epochs.push_back(std::move(st));
    }

    result.model = std::move(model);
    return result;
}

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg) {
    return run_training(ds, cfg, false);
}

TrainResult train_baseline_single_codebook(const Dataset& ds, const TrainConfig& cfg) {
    return run_training(ds, cfg, true);
}

}  // namespace unitok
