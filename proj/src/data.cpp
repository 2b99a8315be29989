#include "unitok/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"

namespace unitok {

using ordered_json = nlohmann::ordered_json;

void Dataset::rebuild_index() {
    int k = 0;
    for (const auto& r : records) k = std::max(k, r.domain + 1);
    by_domain.assign(k, {});
    for (size_t i = 0; i < records.size(); ++i) {
        by_domain[records[i].domain].push_back(static_cast<int>(i));
    }
}

Dataset gen_synthetic(int K, int items_per_domain, int d, double separation,
                      double intra_std, uint64_t seed, int subclusters) {
    if (K < 1 || items_per_domain < 1 || d < 2 || subclusters < 1) {
        throw FormatError("gen_synthetic: invalid sizes");
    }
    Rng root(seed);
    Dataset ds;
    ds.dim = d;
    ds.domain_map.resize(K);
    for (int k = 0; k < K; ++k) {
        ds.domain_map[k] = k;
        Rng rng = root.fork(static_cast<uint64_t>(k) + 1);
        // Domains span a complexity range: sub-cluster counts follow a
        // geometric spread around the base, so simple and rich domains
        // coexist. The noise scale stays uniform, keeping the reconstruction
        // floor comparable across domains. K = 1 keeps the nominal count.
        int domain_subclusters = subclusters;
        if (K > 1) {
            double t = static_cast<double>(k) / (K - 1);  // 0..1
            domain_subclusters = std::max(
                1, static_cast<int>(std::lround(subclusters * std::pow(4.0, 2.0 * t - 1.0))));
        }
        double noise = intra_std;

        Vec mu = rng.unit_sphere(d);
        for (double& v : mu) v *= separation;
        std::vector<Vec> centers(domain_subclusters);
        for (auto& c : centers) {
            c = rng.unit_sphere(d);
            for (int j = 0; j < d; ++j) c[j] = mu[j] + 2.0 * noise * c[j];
        }
        double coord_std = noise / std::sqrt(static_cast<double>(d));
        for (int i = 0; i < items_per_domain; ++i) {
            ItemRecord rec;
            rec.domain = k;
            rec.item_id = "d" + std::to_string(k) + "_i" + std::to_string(i);
            const Vec& c = centers[rng.uniform_int(domain_subclusters)];
            rec.embedding.resize(d);
            for (int j = 0; j < d; ++j) rec.embedding[j] = c[j] + coord_std * rng.normal();
            double nrm = norm(rec.embedding);
            if (nrm > 1e-12) {
                for (double& v : rec.embedding) v /= nrm;
            }
            ds.records.push_back(std::move(rec));
        }
    }
    ds.rebuild_index();
    return ds;
}

namespace {

// Re-indexes raw domain ids densely (sorted ascending) and validates shape.
Dataset finalize(std::vector<ItemRecord>&& raw, std::vector<int>&& raw_domain_ids, int dim) {
    std::vector<int> ids = raw_domain_ids;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::map<int, int> dense;
    for (size_t i = 0; i < ids.size(); ++i) dense[ids[i]] = static_cast<int>(i);

    Dataset ds;
    ds.dim = dim;
    ds.domain_map = ids;
    ds.records = std::move(raw);
    for (size_t i = 0; i < ds.records.size(); ++i) {
        ds.records[i].domain = dense.at(raw_domain_ids[i]);
    }
    ds.rebuild_index();
    for (int k = 0; k < ds.num_domains(); ++k) {
        std::map<std::string, int> seen;
        for (int pos : ds.by_domain[k]) {
            if (++seen[ds.records[pos].item_id] > 1) {
                throw FormatError("duplicate item_id '" + ds.records[pos].item_id +
                                  "' in domain " + std::to_string(ds.domain_map[k]));
            }
        }
    }
    return ds;
}

}  // namespace

Dataset load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::vector<ItemRecord> raw;
    std::vector<int> raw_ids;
    int dim = 0;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw FormatError(path + " line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("domain") || !j.contains("item_id") ||
            !j.contains("embedding") || !j["embedding"].is_array()) {
            throw FormatError(path + " line " + std::to_string(lineno) +
                              ": expected {\"domain\", \"item_id\", \"embedding\"}");
        }
        int domain = j["domain"].get<int>();
        if (domain < 0) {
            throw FormatError(path + " line " + std::to_string(lineno) + ": negative domain id");
        }
        ItemRecord rec;
        rec.item_id = j["item_id"].get<std::string>();
        rec.embedding = j["embedding"].get<Vec>();
        if (rec.embedding.empty() || !all_finite(rec.embedding)) {
            throw FormatError(path + " line " + std::to_string(lineno) + ": bad embedding");
        }
        if (dim == 0) {
            dim = static_cast<int>(rec.embedding.size());
        } else if (static_cast<int>(rec.embedding.size()) != dim) {
            throw FormatError(path + " line " + std::to_string(lineno) + ": embedding length " +
                              std::to_string(rec.embedding.size()) + ", expected " +
                              std::to_string(dim));
        }
        raw.push_back(std::move(rec));
        raw_ids.push_back(domain);
    }
    if (raw.empty()) throw FormatError(path + ": no records");
    return finalize(std::move(raw), std::move(raw_ids), dim);
}

void save_jsonl(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    for (const auto& rec : ds.records) {
        ordered_json j;
        j["domain"] = ds.domain_map[rec.domain];
        j["item_id"] = rec.item_id;
        j["embedding"] = rec.embedding;
        out << j.dump() << "\n";
    }
}

namespace {

constexpr char kMagic[4] = {'U', 'T', 'O', 'K'};

void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xFF));
    buf.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct ByteReader {
    const std::string& buf;
    size_t pos = 0;
    explicit ByteReader(const std::string& b) : buf(b) {}
    void need(size_t n) const {
        if (pos + n > buf.size()) throw FormatError("binary dataset: truncated file");
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint8_t>(buf[pos]) |
                     (static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_binary(const Dataset& ds, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, 1);
    put_u32(buf, static_cast<uint32_t>(ds.num_domains()));
    put_u32(buf, static_cast<uint32_t>(ds.dim));
    put_u64(buf, static_cast<uint64_t>(ds.records.size()));
    for (const auto& rec : ds.records) {
        put_u32(buf, static_cast<uint32_t>(ds.domain_map[rec.domain]));
        if (rec.item_id.size() > 0xFFFF) throw FormatError("item_id too long for binary format");
        put_u16(buf, static_cast<uint16_t>(rec.item_id.size()));
        buf.append(rec.item_id);
        for (double v : rec.embedding) {
            uint64_t bits;
            std::memcpy(&bits, &v, 8);
            put_u64(buf, bits);
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Dataset load_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ByteReader r(buf);
    if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError(path + ": bad magic");
    uint32_t version = r.u32();
    if (version != 1) {
        throw FormatError(path + ": unsupported version " + std::to_string(version));
    }
    uint32_t k_declared = r.u32();
    uint32_t dim = r.u32();
    uint64_t count = r.u64();
    if (dim == 0 || count == 0) throw FormatError(path + ": empty dataset");
    std::vector<ItemRecord> raw;
    std::vector<int> raw_ids;
    raw.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t domain = r.u32();
        uint16_t idlen = r.u16();
        ItemRecord rec;
        rec.item_id = r.bytes(idlen);
        rec.embedding.resize(dim);
        for (uint32_t j = 0; j < dim; ++j) rec.embedding[j] = r.f64();
        raw.push_back(std::move(rec));
        raw_ids.push_back(static_cast<int>(domain));
    }
    Dataset ds = finalize(std::move(raw), std::move(raw_ids), static_cast<int>(dim));
    if (ds.num_domains() != static_cast<int>(k_declared)) {
        throw FormatError(path + ": domain count mismatch with header");
    }
    return ds;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path);
    char magic[4] = {0, 0, 0, 0};
    in.read(magic, 4);
    in.close();
    if (std::memcmp(magic, kMagic, 4) == 0) return load_binary(path);
    return load_jsonl(path);
}

Batch sample_batch(const Dataset& ds, int batch_size, int min_per_domain, Rng& rng) {
    int k = ds.num_domains();
    if (k < 1) throw FormatError("sample_batch: empty dataset");
    if (min_per_domain < 0 || batch_size < 1 || batch_size < k * min_per_domain) {
        throw FormatError("sample_batch: batch_size " + std::to_string(batch_size) +
                          " cannot hold " + std::to_string(min_per_domain) + " items from " +
                          std::to_string(k) + " domains");
    }

    // Fixed apportionment: minimum per domain, remainder by largest-remainder
    // on domain sizes (ties toward the larger domain, then lower index).
    std::vector<int> counts(k, min_per_domain);
    int rest = batch_size - k * min_per_domain;
    double total = static_cast<double>(ds.total_items());
    std::vector<double> quota(k);
    int assigned = 0;
    for (int i = 0; i < k; ++i) {
        quota[i] = rest * ds.by_domain[i].size() / total;
        counts[i] += static_cast<int>(quota[i]);
        assigned += static_cast<int>(quota[i]);
    }
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double ra = quota[a] - std::floor(quota[a]);
        double rb = quota[b] - std::floor(quota[b]);
        if (ra != rb) return ra > rb;
        if (ds.by_domain[a].size() != ds.by_domain[b].size()) {
            return ds.by_domain[a].size() > ds.by_domain[b].size();
        }
        return a < b;
    });
    for (int i = 0; i < rest - assigned; ++i) counts[order[i % k]] += 1;

    Batch batch;
    batch.per_domain_index.assign(k, {});
    for (int dom = 0; dom < k; ++dom) {
        const auto& pool = ds.by_domain[dom];
        int want = counts[dom];
        std::vector<int> picks;
        if (want <= static_cast<int>(pool.size())) {
            // Partial Fisher-Yates for a without-replacement draw.
            std::vector<int> idx(pool.begin(), pool.end());
            for (int i = 0; i < want; ++i) {
                int j = i + rng.uniform_int(static_cast<int>(idx.size()) - i);
                std::swap(idx[i], idx[j]);
                picks.push_back(idx[i]);
            }
        } else {
            for (int i = 0; i < want; ++i) picks.push_back(pool[rng.uniform_int(static_cast<int>(pool.size()))]);
        }
        for (int pos : picks) {
            batch.per_domain_index[dom].push_back(static_cast<int>(batch.records.size()));
            batch.records.push_back(ds.records[pos]);
        }
    }
    return batch;
}

}  // namespace unitok
