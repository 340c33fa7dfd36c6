#include "xtalgen/io/cif.hpp"

#include <cctype>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>

namespace xtalgen::io {

namespace {

// CIF values may carry a standard uncertainty: "5.6402(3)".
std::optional<double> parse_number(std::string token) {
  if (auto paren = token.find('('); paren != std::string::npos) token.erase(paren);
  if (token.empty() || token == "." || token == "?") return std::nullopt;
  try {
    std::size_t used = 0;
    const double value = std::stod(token, &used);
    if (used != token.size()) return std::nullopt;
    return value;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    if (line[i] == '#') break;
    if (line[i] == '\'' || line[i] == '"') {
      const char quote = line[i];
      const auto close = line.find(quote, i + 1);
      if (close == std::string::npos) {
        tokens.push_back(line.substr(i + 1));
        break;
      }
      tokens.push_back(line.substr(i + 1, close - i - 1));
      i = close + 1;
      continue;
    }
    auto j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

// "Ni1" -> "Ni", "O2-" -> "O".
std::string symbol_from_label(const std::string& label) {
  std::string symbol;
  for (char ch : label) {
    if (!std::isalpha(static_cast<unsigned char>(ch))) break;
    symbol += symbol.empty() ? static_cast<char>(std::toupper(static_cast<unsigned char>(ch)))
                             : static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (symbol.size() == 2) break;
  }
  return symbol;
}

}  // namespace

std::string emit_cif(const Crystal& crystal, const std::string& data_name) {
  const LatticeParameters p = lattice_invariants(crystal.lattice());
  std::string out;
  char line[256];
  out += "data_" + data_name + "\n";
  out += "_symmetry_space_group_name_H-M   'P 1'\n";
  out += "_symmetry_Int_Tables_number   1\n";
  const std::pair<const char*, double> cell[] = {
      {"_cell_length_a", p.a},        {"_cell_length_b", p.b},       {"_cell_length_c", p.c},
      {"_cell_angle_alpha", p.alpha}, {"_cell_angle_beta", p.beta}, {"_cell_angle_gamma", p.gamma},
  };
  for (const auto& [key, value] : cell) {
    std::snprintf(line, sizeof line, "%-20s %.10f\n", key, value);
    out += line;
  }
  std::snprintf(line, sizeof line, "%-20s %.10f\n", "_cell_volume", crystal.lattice().volume());
  out += line;
  out += "loop_\n";
  out += " _atom_site_label\n _atom_site_type_symbol\n";
  out += " _atom_site_fract_x\n _atom_site_fract_y\n _atom_site_fract_z\n _atom_site_occupancy\n";
  std::map<std::string, int> label_counter;
  const Coords& frac = crystal.frac_coords();
  for (std::size_t i = 0; i < crystal.size(); ++i) {
    const auto& symbol = crystal.species()[i];
    const int n = ++label_counter[symbol];
    const auto row = static_cast<Eigen::Index>(i);
    std::snprintf(line, sizeof line, "  %s%d  %s  %.10f  %.10f  %.10f  1\n", symbol.c_str(), n,
                  symbol.c_str(), frac(row, 0), frac(row, 1), frac(row, 2));
    out += line;
  }
  return out;
}

Crystal parse_cif(const std::string& text) {
  std::map<std::string, double> cell;
  std::vector<std::string> site_headers;
  std::vector<std::vector<std::string>> site_rows;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  enum class State { Top, LoopHeader, LoopBody } state = State::Top;
  bool loop_is_sites = false;
  std::vector<std::string> current_headers;
  std::vector<std::string> pending;  // values for the current loop row

  auto finish_loop = [&] {
    if (loop_is_sites && site_headers.empty()) site_headers = current_headers;
    current_headers.clear();
    pending.clear();
    loop_is_sites = false;
    state = State::Top;
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const auto tokens = tokenize(raw);
    if (tokens.empty()) {
      if (state == State::LoopBody) finish_loop();
      continue;
    }
    const std::string first = lower(tokens[0]);
    if (first == "loop_") {
      if (state != State::Top) finish_loop();
      state = State::LoopHeader;
      continue;
    }
    if (state == State::LoopHeader && first[0] == '_') {
      current_headers.push_back(first);
      if (first.rfind("_atom_site_", 0) == 0 && first.rfind("_atom_site_aniso", 0) != 0) {
        loop_is_sites = true;
      }
      continue;
    }
    if (state != State::Top && (first[0] == '_' || first.rfind("data_", 0) == 0)) finish_loop();
    if (state == State::LoopHeader) state = State::LoopBody;

    if (state == State::LoopBody) {
      if (!loop_is_sites) continue;
      pending.insert(pending.end(), tokens.begin(), tokens.end());
      while (pending.size() >= current_headers.size()) {
        site_rows.emplace_back(pending.begin(), pending.begin() + static_cast<long>(current_headers.size()));
        pending.erase(pending.begin(), pending.begin() + static_cast<long>(current_headers.size()));
      }
      continue;
    }

    if (first.rfind("_cell_", 0) == 0) {
      if (tokens.size() < 2) throw ParseError("CIF line " + std::to_string(line_no) + ": " + first + " has no value");
      const auto value = parse_number(tokens[1]);
      if (!value) {
        throw ParseError("CIF line " + std::to_string(line_no) + ": non-numeric value '" + tokens[1] +
                         "' for " + first);
      }
      cell[first] = *value;
    }
  }
  if (state != State::Top) finish_loop();

  LatticeParameters p;
  const std::pair<const char*, double*> required[] = {
      {"_cell_length_a", &p.a},        {"_cell_length_b", &p.b},       {"_cell_length_c", &p.c},
      {"_cell_angle_alpha", &p.alpha}, {"_cell_angle_beta", &p.beta}, {"_cell_angle_gamma", &p.gamma},
  };
  for (const auto& [key, target] : required) {
    auto it = cell.find(key);
    if (it == cell.end()) throw ParseError(std::string("CIF is missing ") + key);
    *target = it->second;
  }
  if (site_headers.empty()) throw ParseError("CIF has no _atom_site_ loop");

  auto column = [&](const char* name) -> int {
    for (std::size_t i = 0; i < site_headers.size(); ++i) {
      if (site_headers[i] == name) return static_cast<int>(i);
    }
    return -1;
  };
  const int col_symbol = column("_atom_site_type_symbol");
  const int col_label = column("_atom_site_label");
  const int col_x = column("_atom_site_fract_x");
  const int col_y = column("_atom_site_fract_y");
  const int col_z = column("_atom_site_fract_z");
  if (col_x < 0 || col_y < 0 || col_z < 0) throw ParseError("CIF atom-site loop lacks fractional coordinates");
  if (col_symbol < 0 && col_label < 0) throw ParseError("CIF atom-site loop lacks type symbols and labels");

  std::vector<std::string> species;
  Coords frac(static_cast<Eigen::Index>(site_rows.size()), 3);
  for (std::size_t r = 0; r < site_rows.size(); ++r) {
    const auto& row = site_rows[r];
    std::string symbol = symbol_from_label(row[static_cast<std::size_t>(col_symbol >= 0 ? col_symbol : col_label)]);
    if (symbol.empty()) throw ParseError("CIF atom site " + std::to_string(r + 1) + " has no element symbol");
    species.push_back(symbol);
    const int cols[3] = {col_x, col_y, col_z};
    for (int k = 0; k < 3; ++k) {
      const auto value = parse_number(row[static_cast<std::size_t>(cols[k])]);
      if (!value) {
        throw ParseError("CIF atom site " + std::to_string(r + 1) + ": non-numeric coordinate '" +
                         row[static_cast<std::size_t>(cols[k])] + "'");
      }
      frac(static_cast<Eigen::Index>(r), k) = *value;
    }
  }
  if (species.empty()) throw ParseError("CIF atom-site loop is empty");
  return Crystal(Lattice::from_parameters(p), std::move(species), frac);
}

}  // namespace xtalgen::io
