#include "xtalgen/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "xtalgen/core/errors.hpp"
#include "xtalgen/policy/policy.hpp"

namespace xtalgen {

namespace {

// g/cm^3 per amu/Å^3
constexpr double kDensityFactor = 1.66054;

long quantize(double x, double q) { return std::lround(x / q); }

double plogp_ratio(double p, double m) { return p > 0.0 ? p * std::log2(p / m) : 0.0; }

VectorX normalized(const VectorX& p) {
  if ((p.array() < 0.0).any() || !p.allFinite()) throw ConfigError("histogram entries must be finite and non-negative");
  const double s = p.sum();
  if (s <= 0.0) throw ConfigError("histogram has zero mass");
  return p / s;
}

}  // namespace

StructureFingerprint fingerprint(const Crystal& crystal, const FingerprintOptions& options) {
  StructureFingerprint fp;
  fp.composition = composition_string(crystal.composition());
  const auto p = lattice_invariants(crystal.lattice()).as_array();
  for (std::size_t k = 0; k < 3; ++k) fp.lattice[k] = quantize(p[k], options.length_quantum);
  for (std::size_t k = 3; k < 6; ++k) fp.lattice[k] = quantize(p[k], options.angle_quantum);
  const Coords& x = crystal.frac_coords();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      const double d = periodic_distance(crystal.lattice(), x.row(i).transpose(), x.row(j).transpose());
      fp.distances.push_back(quantize(d, options.length_quantum));
    }
  }
  std::sort(fp.distances.begin(), fp.distances.end());
  return fp;
}

bool is_valid(const Crystal& crystal, const ElementTable& table, const ValidityOptions& options) {
  if (crystal.size() == 0) return false;
  if (crystal.lattice().volume() < options.min_volume) return false;
  const Coords& x = crystal.frac_coords();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < x.rows(); ++j) {
      if (periodic_distance(crystal.lattice(), x.row(i).transpose(), x.row(j).transpose()) < options.min_distance) {
        return false;
      }
    }
  }
  for (const auto& s : crystal.species()) {
    if (!table.contains(s)) return false;
  }
  return charge_balanced(crystal.composition(), table);
}

double uniqueness(const std::vector<Crystal>& samples, const FingerprintOptions& options) {
  if (samples.empty()) throw ConfigError("uniqueness: no samples");
  std::set<StructureFingerprint> seen;
  for (const auto& c : samples) seen.insert(fingerprint(c, options));
  return 100.0 * static_cast<double>(seen.size()) / static_cast<double>(samples.size());
}

double novelty(const std::vector<Crystal>& samples, const std::vector<Crystal>& reference,
               const FingerprintOptions& options) {
  if (samples.empty()) throw ConfigError("novelty: no samples");
  std::set<StructureFingerprint> known;
  for (const auto& c : reference) known.insert(fingerprint(c, options));
  std::size_t novel = 0;
  for (const auto& c : samples) novel += known.count(fingerprint(c, options)) == 0;
  return 100.0 * static_cast<double>(novel) / static_cast<double>(samples.size());
}

std::vector<std::string> element_support(const std::vector<Crystal>& a, const std::vector<Crystal>& b) {
  std::set<std::string> s;
  for (const auto* set : {&a, &b}) {
    for (const auto& c : *set) s.insert(c.species().begin(), c.species().end());
  }
  return {s.begin(), s.end()};
}

VectorX element_histogram(const std::vector<Crystal>& crystals, const std::vector<std::string>& support) {
  VectorX h = VectorX::Zero(static_cast<Eigen::Index>(support.size()));
  for (const auto& c : crystals) {
    for (const auto& s : c.species()) {
      auto it = std::lower_bound(support.begin(), support.end(), s);
      if (it == support.end() || *it != s) throw UnknownElementError(s, "histogram support");
      h(it - support.begin()) += 1.0;
    }
  }
  const double total = h.sum();
  if (total > 0.0) h /= total;
  return h;
}

double jsd(const VectorX& p_in, const VectorX& q_in) {
  if (p_in.size() != q_in.size()) throw ShapeError("jsd: histograms differ in length");
  const VectorX p = normalized(p_in);
  const VectorX q = normalized(q_in);
  double js = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p(i) + q(i));
    js += 0.5 * plogp_ratio(p(i), m) + 0.5 * plogp_ratio(q(i), m);
  }
  return std::sqrt(std::clamp(js, 0.0, 1.0));
}

Vec3 descriptor(const Crystal& crystal, const ElementTable& table) {
  double mass = 0.0;
  for (const auto& s : crystal.species()) mass += table.at(s).mass;
  const double volume = crystal.lattice().volume();
  return {kDensityFactor * mass / volume, volume, static_cast<double>(crystal.size())};
}

MatrixX descriptors(const std::vector<Crystal>& crystals, const ElementTable& table) {
  MatrixX out(static_cast<Eigen::Index>(crystals.size()), 3);
  for (std::size_t i = 0; i < crystals.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = descriptor(crystals[i], table).transpose();
  }
  return out;
}

double mmd(const MatrixX& a, const MatrixX& b, bool biased) {
  if (a.rows() == 0 || b.rows() == 0) throw ConfigError("mmd: empty sample");
  if (a.cols() != b.cols()) throw ShapeError("mmd: descriptor widths differ");
  MatrixX pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  std::vector<double> dists;
  for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j) dists.push_back((pooled.row(i) - pooled.row(j)).norm());
  }
  double bandwidth = 1.0;
  if (!dists.empty()) {
    auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
    std::nth_element(dists.begin(), mid, dists.end());
    double median = *mid;
    if (dists.size() % 2 == 0) median = 0.5 * (median + *std::max_element(dists.begin(), mid));
    if (median > 0.0) bandwidth = median;
  }
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  auto kernel_mean = [&](const MatrixX& x, const MatrixX& y, bool same) {
    double s = 0.0;
    double count = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < y.rows(); ++j) {
        if (same && !biased && i == j) continue;
        s += std::exp(-(x.row(i) - y.row(j)).squaredNorm() * inv);
        count += 1.0;
      }
    }
    return count > 0.0 ? s / count : 0.0;
  };
  if (!biased && (a.rows() < 2 || b.rows() < 2)) throw ConfigError("mmd: unbiased estimate needs two rows per sample");
  const double value = kernel_mean(a, a, true) + kernel_mean(b, b, true) - 2.0 * kernel_mean(a, b, false);
  return std::max(0.0, value);
}

nlohmann::json MetricsReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"n_samples", n_samples},   {"n_valid", n_valid},
          {"valid_pct", valid_pct},   {"unique_pct", unique_pct},
          {"novel_pct", novel_pct},   {"jsd", opt(jsd)},
          {"mmd", opt(mmd)},          {"metastable_pct", opt(metastable_pct)},
          {"msun_pct", opt(msun_pct)}, {"attempts", attempts},
          {"total_seconds", total_seconds}, {"seconds_per_sample", seconds_per_sample}};
}

std::string MetricsReport::csv_header() {
  return "n_samples,n_valid,valid_pct,unique_pct,novel_pct,jsd,mmd,metastable_pct,msun_pct,attempts,total_seconds,"
         "seconds_per_sample";
}

std::string MetricsReport::csv_row() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
  return std::to_string(n_samples) + "," + std::to_string(n_valid) + "," + num(valid_pct) + "," + num(unique_pct) +
         "," + num(novel_pct) + "," + opt(jsd) + "," + opt(mmd) + "," + opt(metastable_pct) + "," + opt(msun_pct) +
         "," + std::to_string(attempts) + "," + num(total_seconds) + "," + num(seconds_per_sample);
}

MetricsReport evaluate(const std::vector<Crystal>& samples, const std::vector<Crystal>& reference,
                       const ElementTable& table, EnergyOracle* oracle, const FingerprintOptions& fingerprint_options,
                       const ValidityOptions& validity) {
  MetricsReport r;
  r.n_samples = samples.size();
  if (samples.empty()) return r;
  std::set<StructureFingerprint> known;
  for (const auto& c : reference) known.insert(fingerprint(c, fingerprint_options));
  std::set<StructureFingerprint> seen;
  std::size_t novel = 0;
  std::size_t metastable = 0;
  std::size_t msun = 0;
  for (const auto& c : samples) {
    const bool valid = is_valid(c, table, validity);
    r.n_valid += valid;
    const auto fp = fingerprint(c, fingerprint_options);
    const bool is_new = known.count(fp) == 0;
    const bool first = seen.insert(fp).second;
    novel += is_new;
    if (oracle) {
      const bool stable = oracle->is_metastable(c);
      metastable += stable;
      msun += stable && first && is_new && valid;
    }
  }
  const double n = static_cast<double>(samples.size());
  r.valid_pct = 100.0 * static_cast<double>(r.n_valid) / n;
  r.unique_pct = 100.0 * static_cast<double>(seen.size()) / n;
  r.novel_pct = 100.0 * static_cast<double>(novel) / n;
  if (oracle) {
    r.metastable_pct = 100.0 * static_cast<double>(metastable) / n;
    r.msun_pct = 100.0 * static_cast<double>(msun) / n;
  }
  if (!reference.empty()) {
    const auto support = element_support(samples, reference);
    r.jsd = jsd(element_histogram(samples, support), element_histogram(reference, support));
    const MatrixX da = descriptors(samples, table);
    const MatrixX db = descriptors(reference, table);
    r.mmd = mmd(da, db, da.rows() < 2 || db.rows() < 2);
  }
  return r;
}

}  // namespace xtalgen
