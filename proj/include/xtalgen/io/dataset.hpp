#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xtalgen/core/crystal.hpp"
#include "xtalgen/core/elements.hpp"

namespace xtalgen::io {

inline constexpr int kDatasetSchemaVersion = 1;

struct CrystalRecord {
  std::string identifier;
  Crystal crystal;
  std::map<std::string, double> properties;
};

struct Dataset {
  std::vector<std::string> property_names;
  std::vector<CrystalRecord> records;

  std::vector<Crystal> crystals() const;
  std::size_t size() const { return records.size(); }
};

// Line-oriented JSON: a header object {schema_version, property_names} followed
// by one record object per line:
//   {"id": ..., "lattice": [[3],[3],[3]], "species": [...],
//    "frac_coords": [[x,y,z], ...], "properties": {...}}
Dataset parse_dataset(const std::string& text, const ElementTable& table = ElementTable::builtin());
Dataset load_dataset(const std::filesystem::path& path,
                     const ElementTable& table = ElementTable::builtin());

// significant_digits <= 0 writes the shortest representation that round-trips exactly.
std::string format_dataset(const Dataset& dataset, int significant_digits = 12);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset,
                  int significant_digits = 12);

// Wraps bare crystals as records "sample-0", "sample-1", ...
Dataset make_dataset(const std::vector<Crystal>& crystals, const std::string& prefix = "sample");

}  // namespace xtalgen::io
