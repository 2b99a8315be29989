#include "unitok/model.hpp"

#include <algorithm>
#include <cstring>
#include <map>

namespace unitok {

void ModelConfig::validate() const {
    if (d_in < 1 || d_latent < 1 || levels < 1 || codebook_size < 1 || top_n < 1) {
        throw ShapeError("model config: sizes must be positive");
    }
    for (int h : enc_hidden) {
        if (h < 1) throw ShapeError("model config: hidden sizes must be positive");
    }
}

UnitokModel UnitokModel::make(const ModelConfig& cfg, int n_experts, Rng& rng) {
    cfg.validate();
    if (n_experts < 1) throw ShapeError("model: need at least one expert");
    UnitokModel m;
    m.cfg = cfg;
    m.n_experts = n_experts;
    m.ae = Autoencoder::make(cfg.d_in, cfg.enc_hidden, cfg.d_latent, rng);
    m.router = LinearLayer::he_uniform(n_experts, cfg.d_latent, rng);
    for (int k = 0; k < n_experts + 1; ++k) {
        m.stacks.push_back(CodebookStack::zeros(cfg.levels, cfg.codebook_size, cfg.d_latent));
    }
    return m;
}

UnitokModel UnitokModel::make_baseline(const ModelConfig& cfg, int codebook_size, Rng& rng) {
    cfg.validate();
    UnitokModel m;
    m.cfg = cfg;
    m.cfg.codebook_size = codebook_size;
    m.baseline = true;
    m.ae = Autoencoder::make(cfg.d_in, cfg.enc_hidden, cfg.d_latent, rng);
    m.stacks.push_back(CodebookStack::zeros(cfg.levels, codebook_size, cfg.d_latent));
    return m;
}

std::vector<TensorRef> UnitokModel::tensors() {
    std::vector<TensorRef> out;
    auto add_mlp = [&](Mlp& mlp, const std::string& prefix) {
        for (size_t i = 0; i < mlp.layers.size(); ++i) {
            LinearLayer& l = mlp.layers[i];
            out.push_back({prefix + "." + std::to_string(i) + ".W", l.W.data.data(),
                           l.gW.data.data(), l.W.data.size()});
            out.push_back({prefix + "." + std::to_string(i) + ".b", l.b.data(), l.gb.data(),
                           l.b.size()});
        }
    };
    add_mlp(ae.encoder, "enc");
    add_mlp(ae.decoder, "dec");
    if (!baseline) {
        out.push_back({"router.W", router.W.data.data(), router.gW.data.data(),
                       router.W.data.size()});
        out.push_back({"router.b", router.b.data(), router.gb.data(), router.b.size()});
    }
    for (size_t s = 0; s < stacks.size(); ++s) {
        for (size_t l = 0; l < stacks[s].levels.size(); ++l) {
            Codebook& cb = stacks[s].levels[l];
            out.push_back({"stack." + std::to_string(s) + ".level." + std::to_string(l),
                           cb.codes.data.data(), cb.gcodes.data.data(), cb.codes.data.size()});
        }
    }
    return out;
}

size_t UnitokModel::param_count() const {
    size_t n = ae.encoder.param_count() + ae.decoder.param_count();
    if (!baseline) n += router.param_count();
    for (const auto& s : stacks) n += s.param_count();
    return n;
}

Vec UnitokModel::param_vector() const {
    Vec p;
    p.reserve(param_count());
    auto self = const_cast<UnitokModel*>(this);
    for (const auto& t : self->tensors()) p.insert(p.end(), t.p, t.p + t.n);
    return p;
}

void UnitokModel::set_param_vector(const Vec& p) {
    size_t pos = 0;
    for (auto& t : tensors()) {
        if (pos + t.n > p.size()) throw ShapeError("set_param_vector: vector too short");
        std::memcpy(t.p, p.data() + pos, t.n * sizeof(double));
        pos += t.n;
    }
    if (pos != p.size()) throw ShapeError("set_param_vector: vector too long");
}

void UnitokModel::zero_grads() {
    for (auto& t : tensors()) std::fill(t.g, t.g + t.n, 0.0);
}

UnitokModel::ItemForward UnitokModel::forward_item(const Vec& x, int forced_expert) const {
    if (static_cast<int>(x.size()) != ae.d_in()) {
        throw ShapeError("forward_item: embedding dim " + std::to_string(x.size()) +
                         ", model expects " + std::to_string(ae.d_in()));
    }
    ItemForward f;
    f.z = ae.encode(x);
    if (baseline) {
        f.baseline_rq = rq_quantize(stacks[0], f.z);
        f.z_hat = f.baseline_rq.quantized;
        f.token.code_indices = f.baseline_rq.indices;
    } else {
        f.moe = moe_forward(router, stacks, f.z, cfg.top_n, forced_expert);
        f.z_hat = f.moe.z_hat;
        f.token = f.moe.token;
    }
    f.x_hat = ae.decode(f.z_hat);
    return f;
}

TokenTable tokenize_dataset(const UnitokModel& model, const Dataset& ds) {
    if (ds.dim != model.ae.d_in()) {
        throw ShapeError("tokenize: dataset dim " + std::to_string(ds.dim) +
                         " does not match model dim " + std::to_string(model.ae.d_in()));
    }
    TokenTable table;
    table.rows.resize(ds.records.size());
    parallel_for(ds.records.size(), [&](size_t i) {
        const ItemRecord& rec = ds.records[i];
        auto fwd = model.forward_item(rec.embedding);
        table.rows[i] = {ds.domain_map[rec.domain], rec.item_id, fwd.token.flat()};
    });
    std::map<std::vector<int>, int> counts;
    for (const auto& row : table.rows) counts[row.token] += 1;
    for (const auto& [token, c] : counts) {
        if (c > 1) table.collision_items += c;
    }
    table.collision_rate =
        table.rows.empty() ? 0.0 : static_cast<double>(table.collision_items) / table.rows.size();
    return table;
}

}  // namespace unitok
