#pragma once

#include "experiment_config.hpp"

#include <stda/eval_metrics.hpp>

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stda::cli {

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& file);

/// Writes <dir>/manifest.json listing every other regular file under `dir`
/// (sorted relative paths) with its byte size and SHA-256.
nlohmann::json write_manifest(const std::filesystem::path& dir);

/// Creates `dir`; refuses a non-empty existing directory unless `force`.
void prepare_output(const std::filesystem::path& dir, bool force);

void write_report_csv(const HorizonReport& report, const std::filesystem::path& file);
nlohmann::json report_json(const HorizonReport& report);

/// Progress and audit lines go here; tests may redirect it.
void set_info_stream(std::ostream* out);

/// One city directory (speed.csv, adjacency.csv, meta.json) per synthetic
/// source and target spec. Returns the written directories.
std::vector<std::filesystem::path> cmd_synth(const ExperimentConfig& config, bool force);

/// run_variant for every seed: base and adapted checkpoints, step logs,
/// per-seed reports and summary.json. Returns the summary.
nlohmann::json cmd_train(const ExperimentConfig& config, bool force);

/// Adapts `checkpoint` on the target adapt split (first seed drives the
/// minibatch order) and evaluates on the test split. Returns the report JSON.
nlohmann::json cmd_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint, bool force);

/// Every variant on the shared seed list; comparison.csv plus summary.json.
nlohmann::json cmd_ablate(const ExperimentConfig& config, bool force);

/// lambda_sweep over `lambdas`; sweep.csv with columns lambda,mae,rmse.
nlohmann::json cmd_sweep(const ExperimentConfig& config, const std::vector<double>& lambdas, bool force);

/// Parses argv and dispatches. Errors become a JSON object on `err` and a
/// nonzero return value.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace stda::cli
