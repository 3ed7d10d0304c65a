#pragma once

#include "needle/errors.hpp"
#include "needle/simulation.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace needle {

inline constexpr int kScenarioSchemaVersion = 1;

/// Schema violation; problems() lists every offending key path.
class ScenarioError : public InvalidConfig {
public:
  explicit ScenarioError(std::vector<std::string> problems);
  const std::vector<std::string> &problems() const { return problems_; }

private:
  std::vector<std::string> problems_;
};

/// Parses and validates a scenario document. Relative replay paths resolve against `base_dir`.
Scenario parse_scenario(const nlohmann::json &doc, const std::filesystem::path &base_dir = {});
Scenario load_scenario(const std::string &path);

/// Fully-resolved document (every default materialized); parse_scenario(scenario_to_json(s)) == s.
nlohmann::json scenario_to_json(const Scenario &scenario);

std::vector<std::string> preset_names();
Scenario preset(std::string_view name);

nlohmann::json summary_to_json(const Scenario &scenario, const ScenarioResult &result);

} // namespace needle
