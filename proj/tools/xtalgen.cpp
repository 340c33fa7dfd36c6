#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xtalgen/core/errors.hpp"
#include "xtalgen/io/cif.hpp"
#include "xtalgen/io/dataset.hpp"
#include "xtalgen/pipeline/experiment.hpp"
#include "xtalgen/pipeline/training.hpp"

namespace fs = std::filesystem;
using namespace xtalgen;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kBudget = 3, kIo = 4 };

ElementTable element_table(const std::string& path) {
  return path.empty() ? ElementTable::builtin() : ElementTable::from_oxidation_file(path);
}

ConditionValues parse_conditions(const std::vector<std::string>& items) {
  ConditionValues out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--condition expects name=value, got '" + item + "'");
    const std::string name = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != value.size() || value.empty()) throw ConfigError("--condition " + name + ": not a number: '" + value + "'");
    out[name] = v;
  }
  return out;
}

void progress_line(const char* stage, int epoch, int epochs, double loss, int every) {
  if (every > 0 && (epoch % every == 0 || epoch + 1 == epochs)) {
    std::fprintf(stderr, "%s epoch %d/%d loss %.6f\n", stage, epoch + 1, epochs, loss);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Three-stage crystal structure generator: lattice mixture, atom sets, torus flow positions."};
  app.set_config("--config", "", "INI/TOML file with option values (command-line flags win)");
  app.require_subcommand(1);
  int log_every = 100;
  app.add_option("--log-every", log_every, "Print training loss every N epochs (0 = quiet)")->capture_default_str();

  // fit-lattice
  auto* fit = app.add_subcommand("fit-lattice", "Fit the lattice Gaussian mixture with EM");
  std::string fit_data, fit_out;
  std::vector<std::string> fit_conditions;
  LatticeFitOptions fit_options;
  fit->add_option("--data", fit_data, "Training dataset (JSON lines)")->required();
  fit->add_option("--out", fit_out, "Output checkpoint")->required();
  fit->add_option("--components", fit_options.em.components, "Mixture components K")->capture_default_str();
  fit->add_option("--max-iters", fit_options.em.max_iters, "EM iteration cap")->capture_default_str();
  fit->add_option("--seed", fit_options.em.seed, "Random seed")->capture_default_str();
  fit->add_option("--condition-names", fit_conditions, "Dataset properties to model jointly with the lattice");
  bool fit_raw = false;
  fit->add_flag("--no-canonicalize", fit_raw, "Fit raw lattice rows instead of the rotation-free form");

  // train-atoms
  auto* atoms = app.add_subcommand("train-atoms", "Train the permutation-invariant atom generator");
  std::string atoms_data, atoms_out;
  AtomTrainingSpec atom_spec;
  atoms->add_option("--data", atoms_data, "Training dataset")->required();
  atoms->add_option("--out", atoms_out, "Output checkpoint")->required();
  atoms->add_option("--epochs", atom_spec.schedule.epochs, "Passes over the dataset")->capture_default_str();
  atoms->add_option("--lr", atom_spec.schedule.learning_rate, "Peak learning rate")->capture_default_str();
  atoms->add_option("--hidden", atom_spec.model.hidden, "Hidden width")->capture_default_str();
  atoms->add_option("--layers", atom_spec.model.layers, "Message-passing layers")->capture_default_str();
  atoms->add_option("--crystals-per-step", atom_spec.crystals_per_step, "Crystals per optimizer step")
      ->capture_default_str();
  atoms->add_option("--seed", atom_spec.model.seed, "Random seed")->capture_default_str();
  std::string atoms_kl = "target-model";
  atoms->add_option("--kl", atoms_kl, "Loss direction: KL(target||model) or KL(model||target)")
      ->check(CLI::IsMember({"target-model", "model-target"}))
      ->capture_default_str();
  atoms->add_option("--condition-names", atom_spec.condition_names, "Dataset properties used as conditions");

  // train-positions
  auto* pos = app.add_subcommand("train-positions", "Train the torus flow-matching position model");
  std::string pos_data, pos_out, pos_path = "torus";
  FlowTrainingSpec flow_spec;
  pos->add_option("--data", pos_data, "Training dataset")->required();
  pos->add_option("--out", pos_out, "Output checkpoint")->required();
  pos->add_option("--epochs", flow_spec.schedule.epochs, "Passes over the dataset")->capture_default_str();
  pos->add_option("--lr", flow_spec.schedule.learning_rate, "Peak learning rate")->capture_default_str();
  pos->add_option("--hidden", flow_spec.model.hidden, "Hidden width")->capture_default_str();
  pos->add_option("--layers", flow_spec.model.layers, "Message-passing layers")->capture_default_str();
  pos->add_option("--pairs-per-crystal", flow_spec.pairs_per_crystal, "Flow pairs per crystal per step")
      ->capture_default_str();
  pos->add_option("--crystals-per-step", flow_spec.crystals_per_step, "Crystals per optimizer step")
      ->capture_default_str();
  pos->add_option("--path", pos_path, "Interpolation path")->check(CLI::IsMember({"torus", "euclidean"}))
      ->capture_default_str();
  pos->add_option("--seed", flow_spec.model.seed, "Random seed")->capture_default_str();
  pos->add_option("--condition-names", flow_spec.condition_names, "Dataset properties used as conditions");

  // train-policy
  auto* pol = app.add_subcommand("train-policy", "Train a real/perturbed discriminator for the partial or full policy");
  std::string pol_data, pol_out, pol_scope = "full";
  DiscriminatorOptions disc;
  pol->add_option("--data", pol_data, "Real crystals")->required();
  pol->add_option("--out", pol_out, "Output checkpoint")->required();
  pol->add_option("--scope", pol_scope, "Atom lists the model judges")->check(CLI::IsMember({"partial", "full"}))
      ->capture_default_str();
  pol->add_option("--epochs", disc.epochs, "Optimizer steps")->capture_default_str();
  pol->add_option("--lr", disc.learning_rate, "Learning rate")->capture_default_str();
  pol->add_option("--hidden", disc.hidden, "Hidden width")->capture_default_str();
  pol->add_option("--layers", disc.layers, "Message-passing layers")->capture_default_str();
  pol->add_option("--perturb-ratio", disc.perturb_ratio, "Perturbed examples per real example")->capture_default_str();
  pol->add_option("--holdout", disc.holdout_fraction, "Fraction of crystals held out for accuracy")
      ->capture_default_str();
  pol->add_option("--threshold", disc.threshold, "Score below which a candidate is rejected")->capture_default_str();
  pol->add_option("--seed", disc.seed, "Random seed")->capture_default_str();

  // sample
  auto* sample = app.add_subcommand("sample", "Generate crystals");
  std::string lattice_path, atom_path, position_path, partial_path, full_path, oxidation_path, sample_out, cif_dir;
  std::string policy_name = "none";
  std::vector<std::string> condition_items;
  GenerationConfig gen;
  sample->add_option("--lattice-model", lattice_path, "Lattice mixture checkpoint")->required();
  sample->add_option("--atom-model", atom_path, "Atom generator checkpoint")->required();
  sample->add_option("--position-model", position_path, "Position flow checkpoint")->required();
  sample->add_option("--partial-model", partial_path, "Discriminator for --policy partial");
  sample->add_option("--full-model", full_path, "Discriminator for --policy full");
  sample->add_option("--oxidation-states", oxidation_path, "Oxidation-state table for --policy smact");
  sample->add_option("--tau", gen.temperature, "Sampling temperature")->capture_default_str();
  sample->add_option("--top-p", gen.top_p, "Nucleus probability mass")->capture_default_str();
  sample->add_option("--max-atoms", gen.max_atoms, "Maximum atoms per cell")->capture_default_str();
  sample->add_option("--num-steps", gen.num_steps, "Euler steps for positions")->capture_default_str();
  sample->add_option("--policy", policy_name, "Rejection policy")
      ->check(CLI::IsMember({"none", "partial", "full", "smact"}))
      ->capture_default_str();
  sample->add_option("--condition", condition_items, "Target property, name=value (repeatable)");
  sample->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  sample->add_option("--n", gen.n_samples, "Number of crystals")->capture_default_str();
  sample->add_option("--attempts-per-sample", gen.attempts_per_sample, "Restart budget per requested crystal")
      ->capture_default_str();
  sample->add_option("--workers", gen.workers, "Worker threads")->capture_default_str();
  sample->add_option("--out", sample_out, "Output dataset (JSON lines)")->required();
  sample->add_option("--cif-dir", cif_dir, "Also write one CIF per crystal here");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "Compute validity, uniqueness, novelty, JSD and MMD");
  std::string eval_samples, eval_reference, eval_out, eval_oxidation;
  eval->add_option("--samples", eval_samples, "Generated dataset")->required();
  eval->add_option("--reference", eval_reference, "Training dataset")->required();
  eval->add_option("--out", eval_out, "Report path prefix (writes .json and .csv)")->required();
  eval->add_option("--oxidation-states", eval_oxidation, "Oxidation-state table");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run an experiment spec (one or more generation configs)");
  std::string sweep_spec;
  sweep->add_option("spec", sweep_spec, "Experiment spec (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*fit) {
      fit_options.canonicalize = !fit_raw;
      const auto data = io::load_dataset(fit_data);
      const auto model = fit_lattice_generator(data, fit_options, fit_conditions);
      model.save(fit_out);
      std::fprintf(stderr, "fit-lattice: %zu lattices, K=%d, %zu EM iterations, mean log-likelihood %.6f\n",
                   data.records.size(), fit_options.em.components, model.log_likelihood_trace().size(),
                   model.log_likelihood_trace().empty() ? 0.0 : model.log_likelihood_trace().back());
    } else if (*atoms) {
      const auto data = io::load_dataset(atoms_data);
      atom_spec.model.kl = kl_direction_from_string(atoms_kl);
      const int epochs = atom_spec.schedule.epochs;
      atom_spec.progress = [&](int e, double l) { progress_line("train-atoms", e, epochs, l, log_every); };
      auto model = train_atom_generator(data, atom_spec);
      model.save(atoms_out);
    } else if (*pos) {
      const auto data = io::load_dataset(pos_data);
      flow_spec.model.path = flow_path_from_string(pos_path);
      const int epochs = flow_spec.schedule.epochs;
      flow_spec.progress = [&](int e, double l) { progress_line("train-positions", e, epochs, l, log_every); };
      auto model = train_position_flow(data, flow_spec);
      model.save(pos_out);
    } else if (*pol) {
      const auto data = io::load_dataset(pol_data);
      disc.scope = pol_scope == "partial" ? DiscriminatorScope::Partial : DiscriminatorScope::Full;
      auto model = train_discriminator(data, disc);
      model.save(pol_out);
      std::fprintf(stderr, "train-policy: %s discriminator, held-out accuracy %.4f\n", pol_scope.c_str(),
                   model.heldout_accuracy());
    } else if (*sample) {
      gen.policy = policy_from_string(policy_name);
      if (!condition_items.empty()) gen.conditions = parse_conditions(condition_items);
      gen.validate();
      const auto lattice = LatticeGenerator::load(lattice_path);
      const auto atom_model = AtomGenerator::load(atom_path);
      const auto position_model = PositionFlowModel::load(position_path);
      std::optional<DiscriminatorModel> partial, full;
      if (!partial_path.empty()) partial = DiscriminatorModel::load(partial_path);
      if (!full_path.empty()) full = DiscriminatorModel::load(full_path);
      const ElementTable table = element_table(oxidation_path);
      GenerationModels models{&lattice, &atom_model, &position_model, partial ? &*partial : nullptr,
                              full ? &*full : nullptr, &table};
      const auto result = generate(gen, models);
      io::save_dataset(sample_out, io::make_dataset(result.crystals, "sample"));
      if (!cif_dir.empty()) {
        fs::create_directories(cif_dir);
        for (std::size_t i = 0; i < result.crystals.size(); ++i) {
          const std::string name = "sample-" + std::to_string(i);
          std::ofstream out(fs::path(cif_dir) / (name + ".cif"));
          if (!out) throw IoError("cannot write CIF into " + cif_dir);
          out << io::emit_cif(result.crystals[i], name);
        }
      }
      std::fprintf(stderr, "sample: %zu crystals, %zu candidates, %.3f s\n", result.crystals.size(),
                   result.stats.attempts, result.stats.total_seconds);
    } else if (*eval) {
      const ElementTable table = element_table(eval_oxidation);
      const auto samples = io::load_dataset(eval_samples, table).crystals();
      const auto reference = io::load_dataset(eval_reference, table).crystals();
      const MetricsReport report = evaluate(samples, reference, table);
      write_report(eval_out + ".json", eval_out + ".csv", report);
      std::cout << report.to_json().dump(2) << '\n';
    } else if (*sweep) {
      for (const auto& run : run_experiment(fs::path(sweep_spec))) {
        std::printf("%s: valid %.2f%% unique %.2f%% novel %.2f%% (%zu samples, %.4f s/sample)\n", run.name.c_str(),
                    run.report.valid_pct, run.report.unique_pct, run.report.novel_pct, run.report.n_samples,
                    run.report.seconds_per_sample);
      }
    }
  } catch (const BudgetExhaustedError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kBudget;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
