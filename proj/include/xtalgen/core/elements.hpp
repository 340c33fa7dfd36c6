#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace xtalgen {

struct ElementInfo {
  std::string symbol;
  int atomic_number = 0;
  double mass = 0.0;  // amu
  std::vector<int> oxidation_states;
};

// Symbol -> (atomic number, mass, allowed oxidation states).
class ElementTable {
 public:
  ElementTable() = default;

  // Built-in table of common oxidation states for H..Bi. Metals also allow 0.
  static const ElementTable& builtin();

  // Oxidation-state file: one element per line, "Symbol s1 s2 ...", '#' comments.
  // Symbols known to the built-in table keep their atomic number and mass.
  static ElementTable from_oxidation_file(const std::filesystem::path& path);
  static ElementTable from_oxidation_text(const std::string& text);

  void set(ElementInfo info);
  bool contains(const std::string& symbol) const { return table_.count(symbol) != 0; }
  // Throws UnknownElementError.
  const ElementInfo& at(const std::string& symbol) const;
  const std::vector<int>& oxidation_states(const std::string& symbol) const {
    return at(symbol).oxidation_states;
  }
  std::vector<std::string> symbols() const;
  std::size_t size() const { return table_.size(); }

  std::string to_oxidation_text() const;

 private:
  std::map<std::string, ElementInfo> table_;
};

}  // namespace xtalgen
