#include "xtalgen/pipeline/experiment.hpp"

#include <fstream>
#include <numeric>

#include "xtalgen/core/errors.hpp"
#include "xtalgen/io/dataset.hpp"

namespace xtalgen {

namespace {

template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  const std::string prefix = "[" + stage + "] ";
  try {
    return fn();
  } catch (const BudgetExhaustedError& e) {
    throw BudgetExhaustedError(prefix + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const ParseError& e) {
    throw ParseError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

template <typename T>
T json_path(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment spec: '") + key + "': " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

GenerationConfig config_from_json(const nlohmann::json& j, GenerationConfig c) {
  try {
    if (j.contains("tau")) c.temperature = j.at("tau").get<double>();
    if (j.contains("top_p")) c.top_p = j.at("top_p").get<double>();
    if (j.contains("max_atoms")) c.max_atoms = j.at("max_atoms").get<int>();
    if (j.contains("num_steps")) c.num_steps = j.at("num_steps").get<int>();
    if (j.contains("policy")) c.policy = policy_from_string(j.at("policy").get<std::string>());
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("n_samples")) c.n_samples = j.at("n_samples").get<std::size_t>();
    if (j.contains("attempts_per_sample")) c.attempts_per_sample = j.at("attempts_per_sample").get<std::size_t>();
    if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    if (j.contains("conditions")) c.conditions = j.at("conditions").get<ConditionValues>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generation config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const GenerationConfig& c) {
  nlohmann::json j{{"tau", c.temperature},
                   {"top_p", c.top_p},
                   {"max_atoms", c.max_atoms},
                   {"num_steps", c.num_steps},
                   {"policy", to_string(c.policy)},
                   {"seed", c.seed},
                   {"n_samples", c.n_samples},
                   {"attempts_per_sample", c.attempts_per_sample},
                   {"workers", c.workers}};
  if (c.conditions) j["conditions"] = *c.conditions;
  return j;
}

ExperimentSpec ExperimentSpec::from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  ExperimentSpec s;
  s.reference = resolve(base, json_path<std::string>(j, "reference"));
  const nlohmann::json models = json_path<nlohmann::json>(j, "models");
  s.lattice_model = resolve(base, json_path<std::string>(models, "lattice"));
  s.atom_model = resolve(base, json_path<std::string>(models, "atoms"));
  s.position_model = resolve(base, json_path<std::string>(models, "positions"));
  if (models.contains("partial")) s.partial_model = resolve(base, json_path<std::string>(models, "partial"));
  if (models.contains("full")) s.full_model = resolve(base, json_path<std::string>(models, "full"));
  if (j.contains("oxidation_states")) s.oxidation_states = resolve(base, json_path<std::string>(j, "oxidation_states"));
  s.output_dir = resolve(base, json_path<std::string>(j, "output_dir"));
  s.config = config_from_json(j.value("config", nlohmann::json::object()));
  if (j.contains("sweep")) {
    for (const auto& entry : j.at("sweep")) {
      const std::string name = json_path<std::string>(entry, "name");
      if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("sweep entry has an invalid name");
      s.runs.emplace_back(name, config_from_json(entry, s.config));
    }
  }
  if (s.runs.empty()) s.runs.emplace_back("run", s.config);
  return s;
}

ExperimentSpec ExperimentSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open experiment spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

MetricsReport report_for(const GenerationResult& result, const std::vector<Crystal>& reference,
                         const ElementTable& table) {
  MetricsReport r = evaluate(result.crystals, reference, table);
  r.attempts = result.stats.attempts;
  r.total_seconds = result.stats.total_seconds;
  const auto& s = result.stats.sample_seconds;
  r.seconds_per_sample = s.empty() ? 0.0 : std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  return r;
}

void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                  const MetricsReport& report) {
  std::ofstream j(json_path);
  std::ofstream c(csv_path);
  if (!j || !c) throw IoError("cannot write report to " + json_path.parent_path().string());
  j << report.to_json().dump(2) << '\n';
  c << MetricsReport::csv_header() << '\n' << report.csv_row() << '\n';
}

std::vector<ExperimentRun> run_experiment(const ExperimentSpec& spec) {
  const io::Dataset reference = in_stage("load reference", [&] { return io::load_dataset(spec.reference); });
  const LatticeGenerator lattice = in_stage("load lattice model", [&] { return LatticeGenerator::load(spec.lattice_model); });
  const AtomGenerator atoms = in_stage("load atom model", [&] { return AtomGenerator::load(spec.atom_model); });
  const PositionFlowModel positions =
      in_stage("load position model", [&] { return PositionFlowModel::load(spec.position_model); });
  std::optional<DiscriminatorModel> partial, full;
  if (spec.partial_model) partial = in_stage("load partial policy", [&] { return DiscriminatorModel::load(*spec.partial_model); });
  if (spec.full_model) full = in_stage("load full policy", [&] { return DiscriminatorModel::load(*spec.full_model); });
  const ElementTable table = in_stage("load oxidation states", [&] {
    return spec.oxidation_states ? ElementTable::from_oxidation_file(*spec.oxidation_states) : ElementTable::builtin();
  });
  const std::vector<Crystal> reference_crystals = reference.crystals();

  GenerationModels models{&lattice, &atoms, &positions, partial ? &*partial : nullptr, full ? &*full : nullptr, &table};
  std::vector<ExperimentRun> runs;
  for (const auto& [name, config] : spec.runs) {
    ExperimentRun run{name, config, {}, spec.output_dir / name / "samples.jsonl"};
    const GenerationResult result = in_stage("generate " + name, [&] { return generate(config, models); });
    run.report = in_stage("evaluate " + name, [&] { return report_for(result, reference_crystals, table); });
    in_stage("write " + name, [&] {
      std::error_code ec;
      std::filesystem::create_directories(spec.output_dir / name, ec);
      if (ec) throw IoError("cannot create " + (spec.output_dir / name).string() + ": " + ec.message());
      io::save_dataset(run.samples_path, io::make_dataset(result.crystals, name));
      write_report(spec.output_dir / name / "report.json", spec.output_dir / name / "report.csv", run.report);
      return 0;
    });
    runs.push_back(std::move(run));
  }
  return runs;
}

std::vector<ExperimentRun> run_experiment(const std::filesystem::path& spec_path) {
  return run_experiment(ExperimentSpec::load(spec_path));
}

}  // namespace xtalgen
