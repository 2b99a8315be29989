// Command-line front end: dataset generation, training, tokenization,
// evaluation, and the model-vs-baseline comparison harness.
//
// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "unitok/data.hpp"
#include "unitok/metrics.hpp"
#include "unitok/model.hpp"
#include "unitok/serialize.hpp"
#include "unitok/trainer.hpp"

using namespace unitok;

namespace {

TrainConfig read_config(const std::string& path) {
    if (path.empty()) return TrainConfig{};
    return load_config(path);
}

int run(int argc, char** argv) {
    CLI::App app{"unitok: multi-domain semantic-id tokenizer"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic multi-domain dataset");
    int g_domains = 4, g_items = 500, g_dim = 768, g_subclusters = 8;
    double g_sep = 4.0, g_std = 0.3;
    uint64_t g_seed = 42;
    std::string g_out;
    bool g_binary = false;
    gen->add_option("--domains", g_domains, "number of domains")->required();
    gen->add_option("--items", g_items, "items per domain")->required();
    gen->add_option("--dim", g_dim, "embedding dimension");
    gen->add_option("--separation", g_sep, "domain mean radius");
    gen->add_option("--intra-std", g_std, "within-domain noise scale");
    gen->add_option("--subclusters", g_subclusters, "sub-clusters per domain");
    gen->add_option("--seed", g_seed, "generator seed");
    gen->add_option("--out", g_out, "output path")->required();
    gen->add_flag("--binary", g_binary, "write the compact binary format");

    // train
    auto* tr = app.add_subcommand("train", "train a tokenizer model");
    std::string t_data, t_config, t_out, t_report;
    bool t_baseline = false;
    tr->add_option("--data", t_data, "dataset path (jsonl or binary)")->required();
    tr->add_option("--config", t_config, "training config JSON");
    tr->add_option("--out", t_out, "model output path")->required();
    tr->add_option("--report", t_report, "training report JSON path");
    tr->add_flag("--baseline", t_baseline, "train the single-codebook baseline");

    // tokenize
    auto* tok = app.add_subcommand("tokenize", "tokenize a dataset with a trained model");
    std::string k_model, k_data, k_out;
    tok->add_option("--model", k_model, "model path")->required();
    tok->add_option("--data", k_data, "dataset path")->required();
    tok->add_option("--out", k_out, "token table output (jsonl)")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a trained model on a dataset");
    std::string e_model, e_data, e_report, e_config;
    ev->add_option("--model", e_model, "model path")->required();
    ev->add_option("--data", e_data, "dataset path")->required();
    ev->add_option("--report", e_report, "eval report JSON path");
    ev->add_option("--config", e_config, "config JSON (hsic settings)");

    // compare
    auto* cmp = app.add_subcommand("compare", "train model and baseline, check structural claims");
    std::string c_data, c_config, c_report;
    cmp->add_option("--data", c_data, "dataset path")->required();
    cmp->add_option("--config", c_config, "training config JSON");
    cmp->add_option("--report", c_report, "comparison report JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (gen->parsed()) {
        Dataset ds = gen_synthetic(g_domains, g_items, g_dim, g_sep, g_std, g_seed, g_subclusters);
        if (g_binary) {
            save_binary(ds, g_out);
        } else {
            save_jsonl(ds, g_out);
        }
        std::printf("wrote %zu records (%d domains, dim %d) to %s\n", ds.total_items(),
                    ds.num_domains(), ds.dim, g_out.c_str());
        return 0;
    }

    if (tr->parsed()) {
        Dataset ds = load_dataset(t_data);
        TrainConfig cfg = read_config(t_config);
        TrainResult res = t_baseline ? train_baseline_single_codebook(ds, cfg) : train(ds, cfg);
        save_model(res.model, t_out);
        if (!t_report.empty()) write_json(train_report_to_json(res.report), t_report);
        std::printf("model written to %s\n", t_out.c_str());
        return 0;
    }

    if (tok->parsed()) {
        UnitokModel model = load_model(k_model);
        Dataset ds = load_dataset(k_data);
        TokenTable table = tokenize_dataset(model, ds);
        save_token_table(table, k_out);
        std::printf("tokenized %zu items, collision rate %.4f\n", table.rows.size(),
                    table.collision_rate);
        return 0;
    }

    if (ev->parsed()) {
        UnitokModel model = load_model(e_model);
        Dataset ds = load_dataset(e_data);
        TrainConfig cfg = read_config(e_config);
        EvalReport rep = eval_report(model, ds, cfg.hsic);
        std::cout << eval_report_table(rep);
        if (!e_report.empty()) write_json(eval_report_to_json(rep), e_report);
        return 0;
    }

    if (cmp->parsed()) {
        Dataset ds = load_dataset(c_data);
        TrainConfig cfg = read_config(c_config);
        ComparisonReport rep = compare_against_baseline(ds, cfg);
        std::cout << comparison_table(rep);
        if (!c_report.empty()) write_json(comparison_to_json(rep), c_report);
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const TrainDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
