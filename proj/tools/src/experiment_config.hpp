#pragma once

#include <stda/meta_trainer.hpp>
#include <stda/synth.hpp>

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stda::cli {

/// A city given either as a dataset directory or as a synthetic spec.
struct CitySpec {
    std::optional<std::filesystem::path> path;
    std::optional<SynthConfig> synth;

    std::string label() const;
};

struct ExperimentConfig {
    std::vector<CitySpec> sources;
    CitySpec target;
    ModelConfig model;
    MetaConfig meta;
    std::vector<std::size_t> horizons{1, 3, 6};
    Variant variant = Variant::Full;
    int adapt_days = 3;
    std::vector<std::uint64_t> seeds{0};
    std::vector<double> lambdas{0.5, 1.0, 1.5, 2.0};
    std::size_t eval_stride = 1;
    std::filesystem::path output_dir = "runs";
};

/// Every field with its default value; the schema the parser accepts.
nlohmann::json default_config_json();

/// Applies "a.b.c=value" to `doc`. The value is parsed as JSON when it can
/// be, otherwise taken as a string. Unknown paths are left for validation.
void apply_override(nlohmann::json& doc, std::string_view assignment);

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the offending field. Relative paths resolve against
/// `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

ExperimentConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides);

nlohmann::json to_json(const ExperimentConfig& config);
nlohmann::json to_json(const SynthConfig& synth);

/// Loads a dataset directory or generates the synthetic city.
CityData resolve_city(const CitySpec& spec);

} // namespace stda::cli
