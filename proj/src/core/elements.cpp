#include "xtalgen/core/elements.hpp"

#include <fstream>
#include <sstream>

#include "xtalgen/core/errors.hpp"

namespace xtalgen {

namespace {

// Common oxidation states; metals additionally allow 0 (elemental/metallic state).
const ElementInfo kBuiltin[] = {
    {"H", 1, 1.008, {-1, 1}},        {"He", 2, 4.0026, {0}},
    {"Li", 3, 6.94, {1, 0}},         {"Be", 4, 9.0122, {2, 0}},
    {"B", 5, 10.81, {3}},            {"C", 6, 12.011, {-4, 4}},
    {"N", 7, 14.007, {-3, 3, 5}},    {"O", 8, 15.999, {-2}},
    {"F", 9, 18.998, {-1}},          {"Ne", 10, 20.180, {0}},
    {"Na", 11, 22.990, {1, 0}},      {"Mg", 12, 24.305, {2, 0}},
    {"Al", 13, 26.982, {3, 0}},      {"Si", 14, 28.085, {-4, 4}},
    {"P", 15, 30.974, {-3, 3, 5}},   {"S", 16, 32.06, {-2, 2, 4, 6}},
    {"Cl", 17, 35.45, {-1, 1, 3, 5, 7}},
    {"Ar", 18, 39.95, {0}},          {"K", 19, 39.098, {1, 0}},
    {"Ca", 20, 40.078, {2, 0}},      {"Sc", 21, 44.956, {3, 0}},
    {"Ti", 22, 47.867, {4, 3, 2, 0}},
    {"V", 23, 50.942, {5, 4, 3, 2, 0}},
    {"Cr", 24, 51.996, {3, 6, 2, 0}},
    {"Mn", 25, 54.938, {2, 4, 7, 3, 0}},
    {"Fe", 26, 55.845, {2, 3, 0}},   {"Co", 27, 58.933, {2, 3, 0}},
    {"Ni", 28, 58.693, {2, 0}},      {"Cu", 29, 63.546, {2, 1, 0}},
    {"Zn", 30, 65.38, {2, 0}},       {"Ga", 31, 69.723, {3, 0}},
    {"Ge", 32, 72.630, {-4, 2, 4}},  {"As", 33, 74.922, {-3, 3, 5}},
    {"Se", 34, 78.971, {-2, 4, 6}},  {"Br", 35, 79.904, {-1, 1, 3, 5}},
    {"Kr", 36, 83.798, {0}},         {"Rb", 37, 85.468, {1, 0}},
    {"Sr", 38, 87.62, {2, 0}},       {"Y", 39, 88.906, {3, 0}},
    {"Zr", 40, 91.224, {4, 0}},      {"Nb", 41, 92.906, {5, 0}},
    {"Mo", 42, 95.95, {4, 6, 0}},    {"Tc", 43, 98.0, {4, 7, 0}},
    {"Ru", 44, 101.07, {3, 4, 0}},   {"Rh", 45, 102.91, {3, 0}},
    {"Pd", 46, 106.42, {2, 4, 0}},   {"Ag", 47, 107.87, {1, 0}},
    {"Cd", 48, 112.41, {2, 0}},      {"In", 49, 114.82, {3, 0}},
    {"Sn", 50, 118.71, {-4, 2, 4}},  {"Sb", 51, 121.76, {-3, 3, 5}},
    {"Te", 52, 127.60, {-2, 2, 4, 6}},
    {"I", 53, 126.90, {-1, 1, 3, 5, 7}},
    {"Xe", 54, 131.29, {0}},         {"Cs", 55, 132.91, {1, 0}},
    {"Ba", 56, 137.33, {2, 0}},      {"La", 57, 138.91, {3, 0}},
    {"Ce", 58, 140.12, {3, 4, 0}},   {"Pr", 59, 140.91, {3, 0}},
    {"Nd", 60, 144.24, {3, 0}},      {"Pm", 61, 145.0, {3, 0}},
    {"Sm", 62, 150.36, {3, 0}},      {"Eu", 63, 151.96, {2, 3, 0}},
    {"Gd", 64, 157.25, {3, 0}},      {"Tb", 65, 158.93, {3, 0}},
    {"Dy", 66, 162.50, {3, 0}},      {"Ho", 67, 164.93, {3, 0}},
    {"Er", 68, 167.26, {3, 0}},      {"Tm", 69, 168.93, {3, 0}},
    {"Yb", 70, 173.05, {3, 0}},      {"Lu", 71, 174.97, {3, 0}},
    {"Hf", 72, 178.49, {4, 0}},      {"Ta", 73, 180.95, {5, 0}},
    {"W", 74, 183.84, {6, 0}},       {"Re", 75, 186.21, {4, 0}},
    {"Os", 76, 190.23, {4, 0}},      {"Ir", 77, 192.22, {3, 4, 0}},
    {"Pt", 78, 195.08, {2, 4, 0}},   {"Au", 79, 196.97, {3, 1, 0}},
    {"Hg", 80, 200.59, {1, 2, 0}},   {"Tl", 81, 204.38, {1, 3, 0}},
    {"Pb", 82, 207.2, {2, 4, 0}},    {"Bi", 83, 208.98, {3, 0}},
};

}  // namespace

const ElementTable& ElementTable::builtin() {
  static const ElementTable table = [] {
    ElementTable t;
    for (const auto& info : kBuiltin) t.set(info);
    return t;
  }();
  return table;
}

void ElementTable::set(ElementInfo info) {
  if (info.oxidation_states.empty()) {
    throw ConfigError("element '" + info.symbol + "' has no oxidation states");
  }
  table_[info.symbol] = std::move(info);
}

const ElementInfo& ElementTable::at(const std::string& symbol) const {
  auto it = table_.find(symbol);
  if (it == table_.end()) throw UnknownElementError(symbol);
  return it->second;
}

std::vector<std::string> ElementTable::symbols() const {
  std::vector<std::string> out;
  out.reserve(table_.size());
  for (const auto& [symbol, _] : table_) out.push_back(symbol);
  return out;
}

ElementTable ElementTable::from_oxidation_text(const std::string& text) {
  ElementTable table;
  const ElementTable& reference = builtin();
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string symbol;
    if (!(fields >> symbol)) continue;
    ElementInfo info;
    if (reference.contains(symbol)) {
      info = reference.at(symbol);
      info.oxidation_states.clear();
    } else {
      info.symbol = symbol;
    }
    std::string token;
    while (fields >> token) {
      try {
        std::size_t used = 0;
        const int state = std::stoi(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        info.oxidation_states.push_back(state);
      } catch (const std::exception&) {
        throw ParseError("oxidation table line " + std::to_string(line_no) + ": '" + token +
                         "' is not an integer");
      }
    }
    if (info.oxidation_states.empty()) {
      throw ParseError("oxidation table line " + std::to_string(line_no) + ": no states for " + symbol);
    }
    table.set(std::move(info));
  }
  return table;
}

ElementTable ElementTable::from_oxidation_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open oxidation table " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_oxidation_text(buffer.str());
}

std::string ElementTable::to_oxidation_text() const {
  std::ostringstream out;
  for (const auto& [symbol, info] : table_) {
    out << symbol;
    for (int s : info.oxidation_states) out << ' ' << s;
    out << '\n';
  }
  return out.str();
}

}  // namespace xtalgen
