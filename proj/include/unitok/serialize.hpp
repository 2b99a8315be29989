#pragma once

// JSON persistence for models, configs, reports, and token tables. Doubles
// round-trip exactly; load(save(m)) is bit-identical.

#include <string>

#include "unitok/metrics.hpp"
#include "unitok/model.hpp"
#include "unitok/trainer.hpp"

#include "json.hpp"

namespace unitok {

using ordered_json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr int kModelFormatVersion = 1;

ordered_json model_to_json(const UnitokModel& model);
UnitokModel model_from_json(const ordered_json& j);
void save_model(const UnitokModel& model, const std::string& path);
UnitokModel load_model(const std::string& path);

// Train configuration from JSON; every omitted key keeps its default.
// Unknown keys are rejected.
TrainConfig config_from_json(const ordered_json& j);
TrainConfig load_config(const std::string& path);
ordered_json config_to_json(const TrainConfig& cfg);

ordered_json train_report_to_json(const TrainReport& report);
ordered_json eval_report_to_json(const EvalReport& report);
ordered_json comparison_to_json(const ComparisonReport& report);

void write_json(const ordered_json& j, const std::string& path);

// One line per item: {"domain": int, "item_id": str, "token": [ints]}.
void save_token_table(const TokenTable& table, const std::string& path);

// Space-aligned summary for terminals.
std::string eval_report_table(const EvalReport& report);
std::string comparison_table(const ComparisonReport& report);

}  // namespace unitok
