#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

// Exercises the installed binary end to end. The test harness points
// UNITOK_BIN at the built executable.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"

namespace {

std::string bin() {
    const char* p = std::getenv("UNITOK_BIN");
    return p ? p : "";
}

int run(const std::string& args) {
    std::string cmd = bin() + " " + args + " >/tmp/unitok_cli_out.txt 2>&1";
    int status = std::system(cmd.c_str());
    if (WIFEXITED(status)) return WEXITSTATUS(status);
    return -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

size_t line_count(const std::string& path) {
    std::ifstream in(path);
    size_t n = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) ++n;
    }
    return n;
}

const char* kSmallCfg = R"({
  "epochs": 6, "warmup_epochs": 3, "batch_size": 24, "min_per_domain": 8,
  "arch": {"enc_hidden": [16], "d_latent": 6, "levels": 2, "codebook_size": 8}
})";

}  // namespace

TEST_CASE("gen-data: one record, determinism, binary format") {
    REQUIRE(!bin().empty());
    CHECK(run("gen-data --domains 1 --items 1 --dim 8 --out /tmp/cli_one.jsonl") == 0);
    CHECK(line_count("/tmp/cli_one.jsonl") == 1);

    CHECK(run("gen-data --domains 2 --items 10 --dim 8 --seed 5 --out /tmp/cli_a.jsonl") == 0);
    CHECK(run("gen-data --domains 2 --items 10 --dim 8 --seed 5 --out /tmp/cli_b.jsonl") == 0);
    CHECK(slurp("/tmp/cli_a.jsonl") == slurp("/tmp/cli_b.jsonl"));

    CHECK(run("gen-data --domains 2 --items 10 --dim 8 --seed 6 --out /tmp/cli_c.jsonl") == 0);
    CHECK(slurp("/tmp/cli_a.jsonl") != slurp("/tmp/cli_c.jsonl"));

    CHECK(run("gen-data --domains 2 --items 6 --dim 8 --seed 5 --binary --out /tmp/cli_a.bin") ==
          0);
    CHECK(run("tokenize --model /nonexistent --data /tmp/cli_a.bin --out /tmp/x") == 2);
}

TEST_CASE("train + tokenize: deterministic artifacts, matching row counts") {
    REQUIRE(!bin().empty());
    CHECK(run("gen-data --domains 2 --items 30 --dim 12 --seed 9 --out /tmp/cli_train.jsonl") ==
          0);
    write_file("/tmp/cli_cfg.json", kSmallCfg);

    CHECK(run("train --data /tmp/cli_train.jsonl --config /tmp/cli_cfg.json "
              "--out /tmp/cli_model1.json --report /tmp/cli_rep1.json") == 0);
    CHECK(run("train --data /tmp/cli_train.jsonl --config /tmp/cli_cfg.json "
              "--out /tmp/cli_model2.json --report /tmp/cli_rep2.json") == 0);
    CHECK(slurp("/tmp/cli_model1.json") == slurp("/tmp/cli_model2.json"));
    CHECK(slurp("/tmp/cli_rep1.json") == slurp("/tmp/cli_rep2.json"));

    CHECK(run("tokenize --model /tmp/cli_model1.json --data /tmp/cli_train.jsonl "
              "--out /tmp/cli_tok1.jsonl") == 0);
    CHECK(run("tokenize --model /tmp/cli_model1.json --data /tmp/cli_train.jsonl "
              "--out /tmp/cli_tok2.jsonl") == 0);
    CHECK(slurp("/tmp/cli_tok1.jsonl") == slurp("/tmp/cli_tok2.jsonl"));
    CHECK(line_count("/tmp/cli_tok1.jsonl") == 60);
}

TEST_CASE("tokenize handles unseen-domain data through the trained experts") {
    REQUIRE(!bin().empty());
    CHECK(run("gen-data --domains 1 --items 12 --dim 12 --seed 77 --out /tmp/cli_zs.jsonl") == 0);
    CHECK(run("tokenize --model /tmp/cli_model1.json --data /tmp/cli_zs.jsonl "
              "--out /tmp/cli_zs_tok.jsonl") == 0);
    std::ifstream in("/tmp/cli_zs_tok.jsonl");
    std::string line;
    size_t rows = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::ordered_json::parse(line);
        auto token = j["token"].get<std::vector<int>>();
        REQUIRE(token.size() == 3);
        CHECK(token[2] >= 0);
        CHECK(token[2] < 2);  // expert ids come from the 2 trained experts
        ++rows;
    }
    CHECK(rows == 12);
}

TEST_CASE("eval: report file and table output") {
    REQUIRE(!bin().empty());
    CHECK(run("eval --model /tmp/cli_model1.json --data /tmp/cli_train.jsonl "
              "--report /tmp/cli_eval.json") == 0);
    auto j = nlohmann::ordered_json::parse(slurp("/tmp/cli_eval.json"));
    CHECK(j.contains("token_entropy_bits"));
    CHECK(j.contains("collision_rate"));
    CHECK(j["per_domain"].size() == 2);
}

TEST_CASE("compare: emits the three structural flags") {
    REQUIRE(!bin().empty());
    write_file("/tmp/cli_cmp_cfg.json", kSmallCfg);
    CHECK(run("compare --data /tmp/cli_train.jsonl --config /tmp/cli_cmp_cfg.json "
              "--report /tmp/cli_cmp.json") == 0);
    auto j = nlohmann::ordered_json::parse(slurp("/tmp/cli_cmp.json"));
    for (const char* key : {"token_entropy", "quantization_error", "mi_balance"}) {
        REQUIRE(j.contains(key));
        std::string flag = j[key]["flag"].get<std::string>();
        CHECK((flag == "PASS" || flag == "FAIL"));
    }
}

TEST_CASE("error contract: exit 2 on bad input, usage, or corrupt config") {
    REQUIRE(!bin().empty());
    write_file("/tmp/cli_bad.json", "{not json");
    CHECK(run("train --data /tmp/cli_train.jsonl --config /tmp/cli_bad.json "
              "--out /tmp/x.json") == 2);
    write_file("/tmp/cli_badkey.json", R"({"epoch": 3})");
    CHECK(run("train --data /tmp/cli_train.jsonl --config /tmp/cli_badkey.json "
              "--out /tmp/x.json") == 2);
    CHECK(run("eval --model /tmp/missing_model.json --data /tmp/cli_train.jsonl") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("gen-data --domains 0 --items 3 --dim 8 --out /tmp/x.jsonl") == 2);

    // Dimension mismatch between model and data.
    CHECK(run("gen-data --domains 2 --items 8 --dim 9 --seed 1 --out /tmp/cli_dim9.jsonl") == 0);
    CHECK(run("tokenize --model /tmp/cli_model1.json --data /tmp/cli_dim9.jsonl "
              "--out /tmp/x") == 2);
}

TEST_CASE("train: minimal empty config applies the documented defaults") {
    REQUIRE(!bin().empty());
    write_file("/tmp/cli_empty_cfg.json", "{}");
    CHECK(run("gen-data --domains 2 --items 20 --dim 16 --seed 3 --out /tmp/cli_smoke.jsonl") ==
          0);
    CHECK(run("train --data /tmp/cli_smoke.jsonl --config /tmp/cli_empty_cfg.json "
              "--out /tmp/cli_smoke_model.json") == 0);
    auto j = nlohmann::ordered_json::parse(slurp("/tmp/cli_smoke_model.json"));
    CHECK(j["config"]["d_latent"] == 32);
    CHECK(j["config"]["levels"] == 4);
    CHECK(j["config"]["codebook_size"] == 256);
}
