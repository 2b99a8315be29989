#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

// Acceptance suite. Each test case prints one PASS/FAIL line; the whole
// binary is expected to stay within desk-scale CPU budgets. The reference
// benchmark (4 domains, 500 items each, dim 128, seed 42, default training
// settings) is trained once and shared across the checks that need it.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "oracles.hpp"
#include "surrogate_oracle.hpp"
#include "unitok/metrics.hpp"
#include "unitok/serialize.hpp"
#include "unitok/trainer.hpp"

using namespace unitok;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Timed {
    double seconds = 0.0;
};

TrainConfig reference_config() {
    TrainConfig cfg;  // library defaults are the benchmark defaults
    cfg.seed = 42;
    return cfg;
}

struct Bench {
    Dataset data;
    TrainResult model_default;  // lambda_mi = 0.03
    TrainResult baseline;
    double seconds_default = 0.0;
    double seconds_baseline = 0.0;
};

const Bench& bench() {
    static Bench b = [] {
        Bench out;
        out.data = gen_synthetic(4, 500, 128, 4.0, 0.3, 42);
        auto t0 = std::chrono::steady_clock::now();
        std::printf("[accept] training reference model (lambda_mi = 0.03)...\n");
        out.model_default = train(out.data, reference_config());
        out.seconds_default = seconds_since(t0);
        t0 = std::chrono::steady_clock::now();
        std::printf("[accept] training capacity-matched baseline...\n");
        out.baseline = train_baseline_single_codebook(out.data, reference_config());
        out.seconds_baseline = seconds_since(t0);
        return out;
    }();
    return b;
}

struct MiSweep {
    TrainResult run_zero;
    TrainResult run_high;  // lambda_mi = 0.3
    double seconds = 0.0;
};

const MiSweep& mi_sweep() {
    static MiSweep s = [] {
        MiSweep out;
        auto t0 = std::chrono::steady_clock::now();
        TrainConfig cfg = reference_config();
        cfg.lambda_mi = 0.0;
        std::printf("[accept] training reference model (lambda_mi = 0)...\n");
        out.run_zero = train(bench().data, cfg);
        cfg.lambda_mi = 0.3;
        std::printf("[accept] training reference model (lambda_mi = 0.3)...\n");
        out.run_high = train(bench().data, cfg);
        out.seconds = seconds_since(t0);
        return out;
    }();
    return s;
}

Batch whole_batch(const Dataset& ds) {
    Batch b;
    b.per_domain_index.assign(ds.num_domains(), {});
    for (size_t i = 0; i < ds.records.size(); ++i) {
        b.per_domain_index[ds.records[i].domain].push_back(static_cast<int>(i));
        b.records.push_back(ds.records[i]);
    }
    return b;
}

}  // namespace

TEST_CASE("criterion 1: composite gradient integrity on a tiny model") {
    auto t0 = std::chrono::steady_clock::now();

    Dataset ds = gen_synthetic(2, 8, 8, 2.0, 0.3, 2024);  // n = 16
    TrainConfig cfg;
    cfg.arch.d_in = 8;
    cfg.arch.enc_hidden = {6};
    cfg.arch.d_latent = 4;
    cfg.arch.levels = 2;
    cfg.arch.codebook_size = 4;
    cfg.arch.top_n = 1;
    cfg.batch_size = 16;
    cfg.min_per_domain = 8;
    cfg.warmup_epochs = 3;
    cfg.epochs = 2;
    cfg.seed = 123;
    UnitokModel model = train(ds, cfg).model;

    Batch batch = whole_batch(ds);
    model.zero_grads();
    total_loss(batch, model, cfg, true);
    Vec analytic;
    for (const auto& t : model.tensors()) analytic.insert(analytic.end(), t.g, t.g + t.n);

    Vec p0 = model.param_vector();
    oracle::Surrogate s = oracle::freeze_structure(p0, batch, cfg, ds.dim, ds.num_domains());
    REQUIRE(std::abs(oracle::surrogate_loss(s, p0) -
                     total_loss(batch, model, cfg, false).total) < 1e-12);

    double max_rel = 0.0;
    for (size_t i = 0; i < p0.size(); ++i) {
        double fd = oracle::central_diff(
            [&](const Vec& p) { return oracle::surrogate_loss(s, p); }, p0, i);
        max_rel = std::max(max_rel, oracle::rel_err(fd, analytic[i], 1e-8));
    }
    double secs = seconds_since(t0);
    bool pass = max_rel < 1e-4 && secs < 30.0;
    std::printf("[ACCEPT] 1 gradient integrity: %s (params=%zu, max rel err=%.3e, %.1fs)\n",
                pass ? "PASS" : "FAIL", p0.size(), max_rel, secs);
    CHECK(max_rel < 1e-4);
    CHECK(secs < 30.0);
}

TEST_CASE("criterion 2: HSIC against an independent routine, zeros, and gradient") {
    auto t0 = std::chrono::steady_clock::now();
    HsicConfig cfg;
    Rng rng(271828);

    double worst_match = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<Vec> xs, zs;
        for (int i = 0; i < 32; ++i) {
            xs.push_back(rng.gaussian_vec(6));
            zs.push_back(rng.gaussian_vec(5));
        }
        auto res = hsic(xs, zs, cfg, false);
        REQUIRE(res.has_value());
        double naive = oracle::hsic_naive(xs, zs, res->sigma_x, res->sigma_z);
        worst_match = std::max(worst_match, std::abs(res->value - naive));
    }

    std::vector<Vec> xs_const(16, Vec{3.0, 1.0});
    std::vector<Vec> zs;
    for (int i = 0; i < 16; ++i) zs.push_back(rng.gaussian_vec(4));
    double const_value = hsic(xs_const, zs, cfg, false)->value;

    std::vector<Vec> fx, fz;
    for (int i = 0; i < 10; ++i) {
        fx.push_back(rng.gaussian_vec(4));
        fz.push_back(rng.gaussian_vec(3));
    }
    auto withgrad = hsic(fx, fz, cfg, true);
    double sx = withgrad->sigma_x, sz = withgrad->sigma_z;
    double worst_grad = 0.0;
    for (size_t i = 0; i < fz.size(); ++i) {
        for (size_t j = 0; j < fz[i].size(); ++j) {
            auto f = [&](const Vec& zv) {
                std::vector<Vec> pert = fz;
                pert[i] = zv;
                return oracle::hsic_naive(fx, pert, sx, sz);
            };
            double fd = oracle::central_diff(f, fz[i], j);
            worst_grad = std::max(worst_grad, oracle::rel_err(fd, withgrad->grad_z[i][j], 1e-10));
        }
    }
    double secs = seconds_since(t0);
    bool pass = worst_match < 1e-10 && std::abs(const_value) < 1e-14 && worst_grad < 1e-5 &&
                secs < 10.0;
    std::printf(
        "[ACCEPT] 2 HSIC correctness: %s (naive gap=%.2e, const=%.2e, grad err=%.2e, %.1fs)\n",
        pass ? "PASS" : "FAIL", worst_match, const_value, worst_grad, secs);
    CHECK(worst_match < 1e-10);
    CHECK(std::abs(const_value) < 1e-14);
    CHECK(worst_grad < 1e-5);
    CHECK(secs < 10.0);
}

TEST_CASE("criterion 3: residual quantization equals re-simulation on 1000 latents") {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(314159);
    std::vector<Vec> seed_pts;
    for (int i = 0; i < 600; ++i) seed_pts.push_back(rng.gaussian_vec(32));
    Rng krng(6);
    CodebookStack stack = init_stack_from_domain(seed_pts, 4, 256, krng);
    auto codes = oracle::stack_codes(stack);

    int mismatches = 0;
    int identity_violations = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        Vec z = rng.gaussian_vec(32);
        RQResult r = rq_quantize(stack, z);
        oracle::RqSim sim = oracle::rq_resimulate(codes, z);
        if (r.indices != sim.indices || r.quantized != sim.quantized) ++mismatches;
        for (size_t l = 0; l + 1 < r.residuals.size(); ++l) {
            const double* c = stack.levels[l].codes.row(r.indices[l]);
            for (int j = 0; j < 32; ++j) {
                if (r.residuals[l + 1][j] != r.residuals[l][j] - c[j]) ++identity_violations;
            }
        }
        for (int j = 0; j < 32; ++j) {
            if (r.quantized[j] != z[j] - r.residuals.back()[j]) ++identity_violations;
        }
    }
    double secs = seconds_since(t0);
    bool pass = mismatches == 0 && identity_violations == 0 && secs < 10.0;
    std::printf("[ACCEPT] 3 RQ correctness: %s (mismatches=%d, identity violations=%d, %.1fs)\n",
                pass ? "PASS" : "FAIL", mismatches, identity_violations, secs);
    CHECK(mismatches == 0);
    CHECK(identity_violations == 0);
    CHECK(secs < 10.0);
}

TEST_CASE("criterion 4: token entropy exceeds the capacity-matched baseline") {
    const Bench& b = bench();
    TokenTable model_tokens = tokenize_dataset(b.model_default.model, b.data);
    TokenTable base_tokens = tokenize_dataset(b.baseline.model, b.data);
    double h_model = token_entropy(model_tokens);
    double h_base = token_entropy(base_tokens);
    double train_secs = b.seconds_default + b.seconds_baseline;
    bool pass = h_model > h_base && train_secs < 600.0;
    std::printf(
        "[ACCEPT] 4 entropy check: %s (model=%.4f bits, baseline=%.4f bits, margin=%.4f, "
        "train %.0fs)\n",
        pass ? "PASS" : "FAIL", h_model, h_base, h_model - h_base, train_secs);
    std::printf("[accept]   collision rate: model=%.4f baseline=%.4f\n",
                model_tokens.collision_rate, base_tokens.collision_rate);
    CHECK(h_model > h_base);
    CHECK(model_tokens.collision_rate < 0.05);  // pinned regression bound
    CHECK(train_secs < 600.0);
}

TEST_CASE("criterion 5: latent quantization error no worse than the baseline") {
    const Bench& b = bench();
    double q_model = quantization_error(b.model_default.model, b.data);
    double q_base = quantization_error(b.baseline.model, b.data);
    bool pass = q_model <= q_base;
    std::printf("[ACCEPT] 5 quantization check: %s (model=%.6f, baseline=%.6f, margin=%.6f)\n",
                pass ? "PASS" : "FAIL", q_model, q_base, q_base - q_model);
    CHECK(q_model <= q_base);
}

TEST_CASE("criterion 6: MI calibration shrinks MI variance and loss spread") {
    const Bench& b = bench();
    const MiSweep& sweep = mi_sweep();
    HsicConfig hcfg = reference_config().hsic;

    EvalReport with_mi = eval_report(b.model_default.model, b.data, hcfg);
    EvalReport no_mi = eval_report(sweep.run_zero.model, b.data, hcfg);
    EvalReport high_mi = eval_report(sweep.run_high.model, b.data, hcfg);

    bool var_lower = with_mi.mi_variance < no_mi.mi_variance;
    bool spread_lower = with_mi.loss_spread < no_mi.loss_spread;
    bool sweep_monotone = no_mi.mi_variance >= with_mi.mi_variance &&
                          with_mi.mi_variance >= high_mi.mi_variance;
    double total_secs = sweep.seconds + b.seconds_default;
    bool pass = var_lower && spread_lower && sweep_monotone && total_secs < 1200.0;
    std::printf(
        "[ACCEPT] 6 MI balance check: %s (varI: 0 -> %.3e, 0.03 -> %.3e, 0.3 -> %.3e; "
        "spread: %.4f -> %.4f; train %.0fs)\n",
        pass ? "PASS" : "FAIL", no_mi.mi_variance, with_mi.mi_variance, high_mi.mi_variance,
        no_mi.loss_spread, with_mi.loss_spread, total_secs);
    CHECK(var_lower);
    CHECK(spread_lower);
    CHECK(sweep_monotone);
    CHECK(total_secs < 1200.0);
}

TEST_CASE("criterion 7: parameter accounting and the deployment ratio") {
    auto t0 = std::chrono::steady_clock::now();
    ModelConfig cfg;  // default dims: 768 -> 256 -> 96 -> 32, stacks 4 x 256 x 32
    Rng rng(1);
    UnitokModel ten = UnitokModel::make(cfg, 10, rng);
    ParamCounts pc = count_parameters(ten);
    CHECK(pc.total == pc.autoencoder + pc.codebooks + pc.router);
    CHECK(pc.codebooks == 11u * 4 * 256 * 32);

    double ratio = deployment_ratio(cfg, 10);
    double secs = seconds_since(t0);
    bool pass = ratio > 5.0 && secs < 1.0;
    std::printf(
        "[ACCEPT] 7 parameter efficiency: %s (ratio=%.2fx, ae=%zu, codebooks=%zu, router=%zu, "
        "%.2fs)\n",
        pass ? "PASS" : "FAIL", ratio, pc.autoencoder, pc.codebooks, pc.router, secs);
    CHECK(ratio > 5.0);
    CHECK(secs < 1.0);
}

TEST_CASE("criterion 8: zero-shot tokenization of unseen domains") {
    const Bench& b = bench();
    const UnitokModel& model = b.model_default.model;

    // A genuinely new distribution: uniform noise.
    Dataset noise;
    noise.dim = 128;
    noise.domain_map = {100};
    Rng rng(555);
    for (int i = 0; i < 200; ++i) {
        ItemRecord rec;
        rec.domain = 0;
        rec.item_id = "noise" + std::to_string(i);
        rec.embedding.resize(128);
        for (double& v : rec.embedding) v = 2.0 * rng.uniform() - 1.0;
        noise.records.push_back(std::move(rec));
    }
    noise.rebuild_index();
    TokenTable noise_tokens = tokenize_dataset(model, noise);
    bool lengths_ok = true;
    for (const auto& row : noise_tokens.rows) {
        lengths_ok = lengths_ok && row.token.size() == 5;  // L + N = 4 + 1
    }

    // A clone of training domain 2's distribution under a fresh domain id.
    // It must route the way its training twin does: concentrated on the
    // expert that carries that domain.
    Dataset clone;
    clone.dim = 128;
    clone.domain_map = {200};
    for (int pos : b.data.by_domain[2]) {
        ItemRecord rec = b.data.records[pos];
        rec.domain = 0;
        clone.records.push_back(std::move(rec));
    }
    clone.rebuild_index();

    EvalReport trained_rep = eval_report(model, b.data, reference_config().hsic);
    const Vec& twin_share = trained_rep.routing_share[2];
    int domain_expert = static_cast<int>(std::max_element(twin_share.begin(), twin_share.end()) -
                                         twin_share.begin());

    EvalReport rep = zero_shot_eval(model, clone, reference_config().hsic);
    double share_on_expert = rep.routing_share[0][domain_expert];

    bool pass = lengths_ok && share_on_expert > 0.5;
    std::printf(
        "[ACCEPT] 8 zero-shot robustness: %s (token length ok=%d, domain 2's expert=%d, clone "
        "routing share=%.3f, twin share=%.3f)\n",
        pass ? "PASS" : "FAIL", lengths_ok ? 1 : 0, domain_expert, share_on_expert,
        twin_share[domain_expert]);
    CHECK(lengths_ok);
    CHECK(share_on_expert > 0.5);
}

TEST_CASE("criterion 9: end-to-end determinism of model and token artifacts") {
    Dataset ds = gen_synthetic(3, 100, 32, 4.0, 0.3, 7);
    TrainConfig cfg;
    cfg.arch.d_in = 32;
    cfg.arch.enc_hidden = {48};
    cfg.arch.d_latent = 16;
    cfg.arch.levels = 3;
    cfg.arch.codebook_size = 32;
    cfg.batch_size = 64;
    cfg.min_per_domain = 8;
    cfg.warmup_epochs = 5;
    cfg.epochs = 30;
    cfg.seed = 99;

    auto run_once = [&](const std::string& tag) {
        TrainResult res = train(ds, cfg);
        std::string model_path = "/tmp/unitok_accept_model_" + tag + ".json";
        std::string token_path = "/tmp/unitok_accept_tokens_" + tag + ".jsonl";
        save_model(res.model, model_path);
        save_token_table(tokenize_dataset(res.model, ds), token_path);
        std::ifstream m(model_path, std::ios::binary), t(token_path, std::ios::binary);
        return std::pair<std::string, std::string>(
            std::string((std::istreambuf_iterator<char>(m)), std::istreambuf_iterator<char>()),
            std::string((std::istreambuf_iterator<char>(t)), std::istreambuf_iterator<char>()));
    };
    auto a = run_once("a");
    auto b = run_once("b");
    bool pass = a.first == b.first && a.second == b.second;
    std::printf("[ACCEPT] 9 determinism: %s (model bytes %zu, token bytes %zu)\n",
                pass ? "PASS" : "FAIL", a.first.size(), a.second.size());
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("criterion 10: module invariants as property checks") {
    const Bench& b = bench();
    Rng rng(808);
    bool simplex_ok = true, shift_ok = true;
    LinearLayer router = LinearLayer::he_uniform(6, 8, rng);
    for (int rep = 0; rep < 200; ++rep) {
        Vec z = rng.gaussian_vec(8);
        GateDecision g = route(router, z, 2);
        double sum = 0.0;
        for (double p : g.probs) sum += p;
        simplex_ok = simplex_ok && std::abs(sum - 1.0) < 1e-12;
        Vec logits = router.forward(z);
        Vec shifted = logits;
        for (double& v : shifted) v += 42.0;
        Vec p1 = softmax(logits), p2 = softmax(shifted);
        shift_ok = shift_ok &&
                   (std::max_element(p1.begin(), p1.end()) - p1.begin()) ==
                       (std::max_element(p2.begin(), p2.end()) - p2.begin());
    }

    // HSIC joint-permutation invariance.
    HsicConfig hcfg;
    std::vector<Vec> xs, zs;
    for (int i = 0; i < 20; ++i) {
        xs.push_back(rng.gaussian_vec(5));
        zs.push_back(rng.gaussian_vec(5));
    }
    double base_value = hsic(xs, zs, hcfg, false)->value;
    std::vector<int> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 19; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    std::vector<Vec> xp, zp;
    for (int idx : perm) {
        xp.push_back(xs[idx]);
        zp.push_back(zs[idx]);
    }
    bool perm_ok = std::abs(hsic(xp, zp, hcfg, false)->value - base_value) < 1e-10;

    // Entropy support bounds on the reference tokenizations.
    TokenTable model_tokens = tokenize_dataset(b.model_default.model, b.data);
    TokenTable base_tokens = tokenize_dataset(b.baseline.model, b.data);
    double h_model = token_entropy(model_tokens);
    double h_base = token_entropy(base_tokens);
    bool bounds_ok = h_base <= 4 * std::log2(256.0) + 1e-9 &&
                     h_model <= 4 * std::log2(256.0) + 1 * std::log2(4.0) + 1e-9;

    // Masked gates are never renormalized.
    bool mask_ok = true;
    for (int i = 0; i < 50; ++i) {
        auto fwd = b.model_default.model.forward_item(b.data.records[i * 7].embedding);
        double masked_sum = 0.0;
        for (size_t k = 0; k < fwd.moe.gate.masked.size(); ++k) {
            mask_ok = mask_ok && fwd.moe.gate.masked[k] <= fwd.moe.gate.probs[k];
            masked_sum += fwd.moe.gate.masked[k];
        }
        for (int k : fwd.moe.gate.selected) {
            mask_ok = mask_ok && fwd.moe.gate.masked[k] == fwd.moe.gate.probs[k];
        }
        mask_ok = mask_ok && masked_sum <= 1.0 + 1e-9;
    }

    // Loss-component isolation on a tiny model.
    Dataset tiny = gen_synthetic(2, 8, 8, 2.0, 0.3, 31);
    TrainConfig tcfg;
    tcfg.arch.d_in = 8;
    tcfg.arch.enc_hidden = {6};
    tcfg.arch.d_latent = 4;
    tcfg.arch.levels = 2;
    tcfg.arch.codebook_size = 4;
    tcfg.batch_size = 16;
    tcfg.min_per_domain = 8;
    tcfg.warmup_epochs = 2;
    tcfg.epochs = 1;
    tcfg.seed = 5;
    UnitokModel tiny_model = train(tiny, tcfg).model;
    Batch batch = whole_batch(tiny);
    LossBreakdown bd = total_loss(batch, tiny_model, tcfg, false);
    bool isolation_ok = bd.total == bd.rec + tcfg.lambda_rq * bd.rq + tcfg.lambda_mi * bd.mi;

    bool pass = simplex_ok && shift_ok && perm_ok && bounds_ok && mask_ok && isolation_ok;
    std::printf(
        "[ACCEPT] 10 invariant suites: %s (simplex=%d shift=%d perm=%d bounds=%d mask=%d "
        "isolation=%d)\n",
        pass ? "PASS" : "FAIL", simplex_ok, shift_ok, perm_ok, bounds_ok, mask_ok, isolation_ok);
    CHECK(simplex_ok);
    CHECK(shift_ok);
    CHECK(perm_ok);
    CHECK(bounds_ok);
    CHECK(mask_ok);
    CHECK(isolation_ok);
}
