#include "xtalgen/lattice/lattice_generator.hpp"

#include <fstream>

namespace xtalgen {

namespace {
constexpr const char* kFormat = "xtalgen.lattice-gmm";
constexpr int kVersion = 1;
}  // namespace

VectorX flatten_lattice(const Lattice& lattice) {
  VectorX flat(9);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) flat(3 * i + j) = lattice.rows()(i, j);
  }
  return flat;
}

Mat3 unflatten_lattice(const VectorX& flat) {
  if (flat.size() != 9) throw ShapeError("lattice vector must have 9 entries");
  Mat3 rows;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) rows(i, j) = flat(3 * i + j);
  }
  return rows;
}

Lattice sample_lattice(const GaussianMixture<double>& gmm, Rng& rng, int max_attempts, bool canonicalize,
                       double min_volume) {
  if (gmm.dim() != 9) throw ShapeError("sample_lattice: mixture must be 9-dimensional");
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const VectorX draw = gmm.sample(rng);
    try {
      Lattice lattice(unflatten_lattice(draw));
      if (canonicalize) lattice = lattice.canonical();
      if (lattice.volume() >= min_volume) return lattice;
    } catch (const DegenerateCellError&) {
      // rejected like any undersized cell
    }
  }
  throw SamplingError("lattice sampling failed: no cell with volume >= " + std::to_string(min_volume) +
                      " A^3 in " + std::to_string(max_attempts) + " attempts");
}

LatticeGenerator LatticeGenerator::fit(const std::vector<Lattice>& lattices, const LatticeFitOptions& options,
                                       const std::vector<std::string>& condition_names,
                                       const MatrixX& conditions) {
  const auto m = static_cast<Eigen::Index>(lattices.size());
  const auto c = static_cast<Eigen::Index>(condition_names.size());
  if (c > 0 && (conditions.rows() != m || conditions.cols() != c)) {
    throw ShapeError("lattice fit: condition matrix must be (lattices x condition names)");
  }
  MatrixX samples(m, 9 + c);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Lattice& l = options.canonicalize ? lattices[static_cast<std::size_t>(i)].canonical()
                                            : lattices[static_cast<std::size_t>(i)];
    samples.row(i).head(9) = flatten_lattice(l).transpose();
    if (c > 0) samples.row(i).tail(c) = conditions.row(i);
  }
  auto fit = fit_em<double>(samples, options.em);
  LatticeGenerator gen;
  gen.mixture_ = std::move(fit.mixture);
  gen.condition_names_ = condition_names;
  gen.canonicalize_ = options.canonicalize;
  gen.trace_ = std::move(fit.log_likelihood_trace);
  return gen;
}

GaussianMixture<double> LatticeGenerator::lattice_mixture(const std::optional<VectorX>& condition_values) const {
  const int c = static_cast<int>(condition_names_.size());
  if (c == 0) {
    if (condition_values && condition_values->size() > 0) {
      throw ConfigError("lattice model was fit without conditions");
    }
    return mixture_;
  }
  if (!condition_values) {
    // Marginalizing a Gaussian keeps the lattice block of mean and covariance.
    std::vector<VectorX> means;
    std::vector<MatrixX> covs;
    for (int k = 0; k < mixture_.components(); ++k) {
      means.push_back(mixture_.means()[static_cast<std::size_t>(k)].head(9));
      covs.push_back(mixture_.covariances()[static_cast<std::size_t>(k)].topLeftCorner(9, 9));
    }
    return GaussianMixture<double>(mixture_.weights(), std::move(means), std::move(covs));
  }
  if (condition_values->size() != c) {
    throw ConfigError("lattice model expects " + std::to_string(c) + " condition values");
  }
  std::vector<int> observed;
  for (int i = 0; i < c; ++i) observed.push_back(9 + i);
  return condition<double>(mixture_, observed, *condition_values);
}

Lattice LatticeGenerator::sample(Rng& rng, const std::optional<VectorX>& condition_values, int max_attempts) const {
  return sample_lattice(lattice_mixture(condition_values), rng, max_attempts, canonicalize_);
}

nlohmann::json LatticeGenerator::to_json() const {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["canonicalized"] = canonicalize_;
  j["condition_names"] = condition_names_;
  j["components"] = mixture_.components();
  j["dim"] = mixture_.dim();
  j["weights"] = std::vector<double>(mixture_.weights().data(), mixture_.weights().data() + mixture_.weights().size());
  nlohmann::json means = nlohmann::json::array(), covs = nlohmann::json::array();
  for (int k = 0; k < mixture_.components(); ++k) {
    const auto& mu = mixture_.means()[static_cast<std::size_t>(k)];
    const auto& cov = mixture_.covariances()[static_cast<std::size_t>(k)];
    means.push_back(std::vector<double>(mu.data(), mu.data() + mu.size()));
    covs.push_back(std::vector<double>(cov.data(), cov.data() + cov.size()));
  }
  j["means"] = means;
  j["covariances"] = covs;
  j["log_likelihood_trace"] = trace_;
  return j;
}

LatticeGenerator LatticeGenerator::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat || j.at("version").get<int>() != kVersion) {
      throw ParseError("not a lattice model file (format/version mismatch)");
    }
    const int k = j.at("components").get<int>();
    const int d = j.at("dim").get<int>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != k) throw ParseError("lattice model: weight count mismatch");
    std::vector<VectorX> means;
    std::vector<MatrixX> covs;
    for (int c = 0; c < k; ++c) {
      const auto mu = j.at("means").at(static_cast<std::size_t>(c)).get<std::vector<double>>();
      const auto cov = j.at("covariances").at(static_cast<std::size_t>(c)).get<std::vector<double>>();
      if (static_cast<int>(mu.size()) != d || static_cast<int>(cov.size()) != d * d) {
        throw ParseError("lattice model: component shape mismatch");
      }
      means.push_back(Eigen::Map<const VectorX>(mu.data(), d));
      covs.push_back(Eigen::Map<const MatrixX>(cov.data(), d, d));
    }
    LatticeGenerator gen;
    gen.mixture_ = GaussianMixture<double>(Eigen::Map<const VectorX>(w.data(), k), std::move(means), std::move(covs));
    gen.condition_names_ = j.at("condition_names").get<std::vector<std::string>>();
    gen.canonicalize_ = j.at("canonicalized").get<bool>();
    if (j.contains("log_likelihood_trace")) gen.trace_ = j["log_likelihood_trace"].get<std::vector<double>>();
    if (d != 9 + static_cast<int>(gen.condition_names_.size())) {
      throw ParseError("lattice model: dimension does not match condition schema");
    }
    return gen;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("lattice model: ") + e.what());
  }
}

void LatticeGenerator::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

LatticeGenerator LatticeGenerator::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace xtalgen
