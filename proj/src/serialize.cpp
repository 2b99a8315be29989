#include "unitok/serialize.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace unitok {

namespace {

ordered_json linear_to_json(const LinearLayer& l) {
    return ordered_json{{"out", l.out_dim()}, {"in", l.in_dim()}, {"W", l.W.data}, {"b", l.b}};
}

LinearLayer linear_from_json(const ordered_json& j) {
    LinearLayer l = LinearLayer::zeros(j.at("out").get<int>(), j.at("in").get<int>());
    l.W.data = j.at("W").get<Vec>();
    l.b = j.at("b").get<Vec>();
    if (l.W.data.size() != static_cast<size_t>(l.W.rows) * l.W.cols ||
        l.b.size() != static_cast<size_t>(l.W.rows)) {
        throw ConfigError("model file: linear layer shape mismatch");
    }
    return l;
}

ordered_json mlp_to_json(const Mlp& m) {
    ordered_json layers = ordered_json::array();
    for (const auto& l : m.layers) layers.push_back(linear_to_json(l));
    return layers;
}

Mlp mlp_from_json(const ordered_json& j) {
    Mlp m;
    for (const auto& lj : j) m.layers.push_back(linear_from_json(lj));
    if (m.layers.empty()) throw ConfigError("model file: empty layer stack");
    return m;
}

ordered_json stack_to_json(const CodebookStack& s) {
    ordered_json levels = ordered_json::array();
    for (const auto& l : s.levels) {
        levels.push_back(ordered_json{{"size", l.size()}, {"dim", l.dim()}, {"codes", l.codes.data}});
    }
    return levels;
}

CodebookStack stack_from_json(const ordered_json& j) {
    CodebookStack s;
    for (const auto& lj : j) {
        Codebook cb;
        int size = lj.at("size").get<int>();
        int dim = lj.at("dim").get<int>();
        cb.codes = Matrix(size, dim);
        cb.gcodes = Matrix(size, dim);
        cb.codes.data = lj.at("codes").get<Vec>();
        if (cb.codes.data.size() != static_cast<size_t>(size) * dim) {
            throw ConfigError("model file: codebook shape mismatch");
        }
        s.levels.push_back(std::move(cb));
    }
    if (s.levels.empty()) throw ConfigError("model file: empty codebook stack");
    s.usage.assign(s.levels.size(), std::vector<long>(s.levels[0].size(), 0));
    return s;
}

ordered_json model_config_to_json(const ModelConfig& c) {
    return ordered_json{{"d_in", c.d_in},       {"enc_hidden", c.enc_hidden},
                        {"d_latent", c.d_latent}, {"levels", c.levels},
                        {"codebook_size", c.codebook_size}, {"top_n", c.top_n}};
}

ModelConfig model_config_from_json(const ordered_json& j) {
    ModelConfig c;
    c.d_in = j.at("d_in").get<int>();
    c.enc_hidden = j.at("enc_hidden").get<std::vector<int>>();
    c.d_latent = j.at("d_latent").get<int>();
    c.levels = j.at("levels").get<int>();
    c.codebook_size = j.at("codebook_size").get<int>();
    c.top_n = j.at("top_n").get<int>();
    return c;
}

}  // namespace

ordered_json model_to_json(const UnitokModel& model) {
    ordered_json j;
    j["format_version"] = kModelFormatVersion;
    j["kind"] = model.baseline ? "baseline" : "unitok";
    j["config"] = model_config_to_json(model.cfg);
    j["n_experts"] = model.n_experts;
    j["domain_map"] = model.domain_map;
    j["seed"] = model.seed;
    j["encoder"] = mlp_to_json(model.ae.encoder);
    j["decoder"] = mlp_to_json(model.ae.decoder);
    if (!model.baseline) j["router"] = linear_to_json(model.router);
    ordered_json stacks = ordered_json::array();
    for (const auto& s : model.stacks) stacks.push_back(stack_to_json(s));
    j["stacks"] = stacks;
    return j;
}

UnitokModel model_from_json(const ordered_json& j) {
    int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
        throw ConfigError("model file: unsupported format_version " + std::to_string(version));
    }
    UnitokModel m;
    m.baseline = j.at("kind").get<std::string>() == "baseline";
    m.cfg = model_config_from_json(j.at("config"));
    m.n_experts = j.at("n_experts").get<int>();
    m.domain_map = j.at("domain_map").get<std::vector<int>>();
    m.seed = j.at("seed").get<uint64_t>();
    m.ae.encoder = mlp_from_json(j.at("encoder"));
    m.ae.decoder = mlp_from_json(j.at("decoder"));
    if (!m.baseline) m.router = linear_from_json(j.at("router"));
    for (const auto& sj : j.at("stacks")) m.stacks.push_back(stack_from_json(sj));
    size_t expect = m.baseline ? 1 : static_cast<size_t>(m.n_experts) + 1;
    if (m.stacks.size() != expect) throw ConfigError("model file: wrong stack count");
    return m;
}

void save_model(const UnitokModel& model, const std::string& path) {
    write_json(model_to_json(model), path);
}

UnitokModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model file " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("model file parse error: ") + e.what());
    }
    return model_from_json(j);
}

TrainConfig config_from_json(const ordered_json& j) {
    TrainConfig cfg;
    static const std::set<std::string> known = {
        "lambda_rq", "lambda_mi", "alpha", "beta", "lr", "epochs", "warmup_epochs",
        "batch_size", "min_per_domain", "seed", "arch", "hsic", "dead_code_resets",
        "dead_code_threshold", "force_domain_routing", "baseline_mode"};
    static const std::set<std::string> known_arch = {"d_in", "enc_hidden", "d_latent",
                                                     "levels", "codebook_size", "top_n"};
    static const std::set<std::string> known_hsic = {"bandwidth", "sigma", "median_scale",
                                                     "max_points_per_domain"};
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
    }
    try {
        if (j.contains("lambda_rq")) cfg.lambda_rq = j["lambda_rq"].get<double>();
        if (j.contains("lambda_mi")) cfg.lambda_mi = j["lambda_mi"].get<double>();
        if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
        if (j.contains("beta")) cfg.beta = j["beta"].get<double>();
        if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
        if (j.contains("epochs")) cfg.epochs = j["epochs"].get<int>();
        if (j.contains("warmup_epochs")) cfg.warmup_epochs = j["warmup_epochs"].get<int>();
        if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<int>();
        if (j.contains("min_per_domain")) cfg.min_per_domain = j["min_per_domain"].get<int>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
        if (j.contains("dead_code_resets")) cfg.dead_code_resets = j["dead_code_resets"].get<bool>();
        if (j.contains("dead_code_threshold")) {
            cfg.dead_code_threshold = j["dead_code_threshold"].get<long>();
        }
        if (j.contains("force_domain_routing")) {
            cfg.force_domain_routing = j["force_domain_routing"].get<bool>();
        }
        if (j.contains("baseline_mode")) {
            std::string mode = j["baseline_mode"].get<std::string>();
            if (mode == "capacity_matched") {
                cfg.baseline_mode = BaselineMode::capacity_matched;
            } else if (mode == "parameter_matched") {
                cfg.baseline_mode = BaselineMode::parameter_matched;
            } else {
                throw ConfigError("config: baseline_mode must be capacity_matched or "
                                  "parameter_matched");
            }
        }
        if (j.contains("arch")) {
            for (const auto& [key, value] : j["arch"].items()) {
                if (!known_arch.count(key)) {
                    throw ConfigError("config: unknown arch key '" + key + "'");
                }
            }
            const auto& a = j["arch"];
            if (a.contains("d_in")) cfg.arch.d_in = a["d_in"].get<int>();
            if (a.contains("enc_hidden")) cfg.arch.enc_hidden = a["enc_hidden"].get<std::vector<int>>();
            if (a.contains("d_latent")) cfg.arch.d_latent = a["d_latent"].get<int>();
            if (a.contains("levels")) cfg.arch.levels = a["levels"].get<int>();
            if (a.contains("codebook_size")) cfg.arch.codebook_size = a["codebook_size"].get<int>();
            if (a.contains("top_n")) cfg.arch.top_n = a["top_n"].get<int>();
        }
        if (j.contains("hsic")) {
            for (const auto& [key, value] : j["hsic"].items()) {
                if (!known_hsic.count(key)) {
                    throw ConfigError("config: unknown hsic key '" + key + "'");
                }
            }
            const auto& h = j["hsic"];
            if (h.contains("bandwidth")) {
                std::string bw = h["bandwidth"].get<std::string>();
                if (bw == "median") {
                    cfg.hsic.bandwidth = HsicConfig::Bandwidth::median;
                } else if (bw == "fixed") {
                    cfg.hsic.bandwidth = HsicConfig::Bandwidth::fixed;
                } else {
                    throw ConfigError("config: hsic bandwidth must be median or fixed");
                }
            }
            if (h.contains("sigma")) cfg.hsic.sigma = h["sigma"].get<double>();
            if (h.contains("median_scale")) cfg.hsic.median_scale = h["median_scale"].get<double>();
            if (h.contains("max_points_per_domain")) {
                cfg.hsic.max_points_per_domain = h["max_points_per_domain"].get<int>();
            }
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return config_from_json(j);
}

ordered_json config_to_json(const TrainConfig& cfg) {
    ordered_json j;
    j["lambda_rq"] = cfg.lambda_rq;
    j["lambda_mi"] = cfg.lambda_mi;
    j["alpha"] = cfg.alpha;
    j["beta"] = cfg.beta;
    j["lr"] = cfg.lr;
    j["epochs"] = cfg.epochs;
    j["warmup_epochs"] = cfg.warmup_epochs;
    j["batch_size"] = cfg.batch_size;
    j["min_per_domain"] = cfg.min_per_domain;
    j["seed"] = cfg.seed;
    j["arch"] = model_config_to_json(cfg.arch);
    j["hsic"] = ordered_json{
        {"bandwidth", cfg.hsic.bandwidth == HsicConfig::Bandwidth::median ? "median" : "fixed"},
        {"sigma", cfg.hsic.sigma},
        {"median_scale", cfg.hsic.median_scale},
        {"max_points_per_domain", cfg.hsic.max_points_per_domain}};
    j["dead_code_resets"] = cfg.dead_code_resets;
    j["dead_code_threshold"] = cfg.dead_code_threshold;
    j["force_domain_routing"] = cfg.force_domain_routing;
    j["baseline_mode"] = cfg.baseline_mode == BaselineMode::capacity_matched
                             ? "capacity_matched"
                             : "parameter_matched";
    return j;
}

namespace {

ordered_json optional_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

}  // namespace

ordered_json train_report_to_json(const TrainReport& report) {
    ordered_json epochs = ordered_json::array();
    for (const auto& e : report.epochs) {
        ordered_json je;
        je["epoch"] = e.epoch;
        je["total"] = e.total;
        je["rec"] = e.rec;
        je["rq"] = e.rq;
        je["mi"] = e.mi;
        je["per_domain_rec"] = e.per_domain_rec;
        ordered_json hs = ordered_json::array();
        for (const auto& v : e.per_domain_hsic) hs.push_back(optional_to_json(v));
        je["per_domain_hsic"] = hs;
        je["hsic_var"] = e.hsic_var;
        je["usage_entropy_bits"] = e.usage_entropy_bits;
        je["gate_matrix"] = e.gate_matrix;
        je["dead_code_resets"] = e.dead_code_resets;
        epochs.push_back(std::move(je));
    }
    return ordered_json{{"epochs", epochs}};
}

ordered_json eval_report_to_json(const EvalReport& report) {
    ordered_json j;
    j["token_entropy_bits"] = report.token_entropy_bits;
    j["quantization_mse"] = report.quantization_mse;
    ordered_json domains = ordered_json::array();
    for (const auto& d : report.per_domain) {
        domains.push_back(ordered_json{{"domain", d.domain},
                                       {"recon_mse", d.recon_mse},
                                       {"hsic", optional_to_json(d.hsic)},
                                       {"token_count", d.token_count}});
    }
    j["per_domain"] = domains;
    j["mi_variance"] = report.mi_variance;
    j["loss_spread"] = report.loss_spread;
    j["collision_rate"] = report.collision_rate;
    j["usage_entropy_bits"] = report.usage_entropy_bits;
    j["gate_matrix"] = report.gate_matrix;
    j["routing_share"] = report.routing_share;
    j["param_counts"] = ordered_json{{"autoencoder", report.params.autoencoder},
                                     {"codebooks", report.params.codebooks},
                                     {"router", report.params.router},
                                     {"total", report.params.total}};
    return j;
}

ordered_json comparison_to_json(const ComparisonReport& r) {
    ordered_json j;
    j["token_entropy"] = ordered_json{{"model", r.entropy_model},
                                      {"baseline", r.entropy_baseline},
                                      {"flag", r.entropy_pass ? "PASS" : "FAIL"}};
    j["quantization_error"] = ordered_json{{"model", r.quant_model},
                                           {"baseline", r.quant_baseline},
                                           {"flag", r.quant_pass ? "PASS" : "FAIL"}};
    j["mi_balance"] = ordered_json{{"mi_var_with", r.mi_var_with},
                                   {"mi_var_without", r.mi_var_without},
                                   {"loss_spread_with", r.spread_with},
                                   {"loss_spread_without", r.spread_without},
                                   {"flag", r.balance_pass ? "PASS" : "FAIL"}};
    j["collision_rate"] = ordered_json{{"model", r.collision_model},
                                       {"baseline", r.collision_baseline}};
    return j;
}

void write_json(const ordered_json& j, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << j.dump(2) << "\n";
}

void save_token_table(const TokenTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    for (const auto& row : table.rows) {
        ordered_json j;
        j["domain"] = row.domain;
        j["item_id"] = row.item_id;
        j["token"] = row.token;
        out << j.dump() << "\n";
    }
}

std::string eval_report_table(const EvalReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << "token_entropy_bits  " << r.token_entropy_bits << "\n";
    os << "quantization_mse    " << r.quantization_mse << "\n";
    os << "collision_rate      " << r.collision_rate << "\n";
    os << "mi_variance         " << std::scientific << r.mi_variance << std::fixed << "\n";
    os << "loss_spread         " << r.loss_spread << "\n";
    os << "params              ae=" << r.params.autoencoder << " codebooks=" << r.params.codebooks
       << " router=" << r.params.router << " total=" << r.params.total << "\n";
    os << "\n" << std::setw(8) << "domain" << std::setw(12) << "items" << std::setw(14)
       << "recon_mse" << std::setw(14) << "hsic" << "\n";
    for (const auto& d : r.per_domain) {
        os << std::setw(8) << d.domain << std::setw(12) << d.token_count << std::setw(14)
           << d.recon_mse << std::setw(14);
        if (d.hsic) {
            os << *d.hsic;
        } else {
            os << "n/a";
        }
        os << "\n";
    }
    return os.str();
}

std::string comparison_table(const ComparisonReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(6);
    os << std::setw(22) << "check" << std::setw(14) << "model" << std::setw(14) << "baseline"
       << std::setw(8) << "flag" << "\n";
    os << std::setw(22) << "token_entropy" << std::setw(14) << r.entropy_model << std::setw(14)
       << r.entropy_baseline << std::setw(8) << (r.entropy_pass ? "PASS" : "FAIL") << "\n";
    os << std::setw(22) << "quantization_error" << std::setw(14) << r.quant_model << std::setw(14)
       << r.quant_baseline << std::setw(8) << (r.quant_pass ? "PASS" : "FAIL") << "\n";
    os << std::scientific;
    os << std::setw(22) << "mi_var (with/without)" << std::setw(14) << r.mi_var_with
       << std::setw(14) << r.mi_var_without << std::setw(8) << (r.balance_pass ? "PASS" : "FAIL")
       << "\n";
    os << std::setw(22) << "spread (with/without)" << std::setw(14) << r.spread_with
       << std::setw(14) << r.spread_without << "\n";
    return os.str();
}

}  // namespace unitok
