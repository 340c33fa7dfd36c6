#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "xtalgen/eval/metrics.hpp"
#include "xtalgen/pipeline/generate.hpp"

namespace xtalgen {

// Reads the GenerationConfig keys present in `j` on top of `base`:
// tau, top_p, max_atoms, num_steps, policy, seed, n_samples,
// attempts_per_sample, workers, conditions {name: value}.
GenerationConfig config_from_json(const nlohmann::json& j, GenerationConfig base = {});
nlohmann::json config_to_json(const GenerationConfig& config);

// Paths are resolved against the directory of the spec file.
struct ExperimentSpec {
  std::filesystem::path reference;  // training dataset for novelty, JSD and MMD
  std::filesystem::path lattice_model, atom_model, position_model;
  std::optional<std::filesystem::path> partial_model, full_model, oxidation_states;
  std::filesystem::path output_dir;
  GenerationConfig config;
  // One run per entry: {"name": ..., <config overrides>}. Empty means one run named "run".
  std::vector<std::pair<std::string, GenerationConfig>> runs;

  static ExperimentSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentSpec load(const std::filesystem::path& path);
};

struct ExperimentRun {
  std::string name;
  GenerationConfig config;
  MetricsReport report;
  std::filesystem::path samples_path;
};

// Generates, evaluates and writes <output_dir>/<name>/{samples.jsonl,
// report.json, report.csv} per run. Errors are rethrown with the failing
// stage prepended to the message.
std::vector<ExperimentRun> run_experiment(const ExperimentSpec& spec);
std::vector<ExperimentRun> run_experiment(const std::filesystem::path& spec_path);

// Report for a finished generation: metrics plus attempts and timing.
MetricsReport report_for(const GenerationResult& result, const std::vector<Crystal>& reference,
                         const ElementTable& table);

void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                  const MetricsReport& report);

}  // namespace xtalgen
