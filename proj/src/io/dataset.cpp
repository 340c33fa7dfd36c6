#include "xtalgen/io/dataset.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace xtalgen::io {

using nlohmann::json;

namespace {

std::string at_line(int line_no) { return "line " + std::to_string(line_no); }

double number_at(const json& value, int line_no, const char* what) {
  if (!value.is_number()) throw ParseError(at_line(line_no) + ": " + what + " is not a number");
  return value.get<double>();
}

double round_significant(double x, int digits) {
  if (digits <= 0 || !std::isfinite(x)) return x;
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*g", digits, x);
  return std::strtod(buffer, nullptr);
}

CrystalRecord parse_record(const json& obj, int line_no, const std::set<std::string>& declared,
                           const ElementTable& table) {
  if (!obj.is_object()) throw ParseError(at_line(line_no) + ": record is not a JSON object");
  for (const char* key : {"id", "lattice", "species", "frac_coords"}) {
    if (!obj.contains(key)) throw ParseError(at_line(line_no) + ": missing field '" + key + "'");
  }
  CrystalRecord record;
  if (!obj["id"].is_string() || obj["id"].get<std::string>().empty()) {
    throw ParseError(at_line(line_no) + ": 'id' must be a non-empty string");
  }
  record.identifier = obj["id"].get<std::string>();

  const json& lat = obj["lattice"];
  if (!lat.is_array() || lat.size() != 3) throw ParseError(at_line(line_no) + ": lattice must be 3x3");
  Mat3 rows;
  for (int i = 0; i < 3; ++i) {
    if (!lat[i].is_array() || lat[i].size() != 3) {
      throw ParseError(at_line(line_no) + ": lattice must be 3x3");
    }
    for (int j = 0; j < 3; ++j) rows(i, j) = number_at(lat[i][j], line_no, "lattice entry");
  }

  const json& species = obj["species"];
  const json& coords = obj["frac_coords"];
  if (!species.is_array() || !coords.is_array() || species.size() != coords.size()) {
    throw ParseError(at_line(line_no) + ": species and frac_coords must be arrays of equal length");
  }
  std::vector<std::string> symbols;
  Coords frac(static_cast<Eigen::Index>(coords.size()), 3);
  for (std::size_t i = 0; i < species.size(); ++i) {
    if (!species[i].is_string()) throw ParseError(at_line(line_no) + ": species entries must be strings");
    const auto symbol = species[i].get<std::string>();
    if (!table.contains(symbol)) throw UnknownElementError(symbol, at_line(line_no));
    symbols.push_back(symbol);
    if (!coords[i].is_array() || coords[i].size() != 3) {
      throw ParseError(at_line(line_no) + ": each coordinate must have 3 components");
    }
    for (int k = 0; k < 3; ++k) {
      frac(static_cast<Eigen::Index>(i), k) = number_at(coords[i][k], line_no, "coordinate");
    }
  }

  try {
    record.crystal = Crystal(Lattice(rows), std::move(symbols), frac);
  } catch (const DegenerateCellError& e) {
    throw ParseError(at_line(line_no) + ": " + e.what());
  }

  if (obj.contains("properties")) {
    const json& props = obj["properties"];
    if (!props.is_object()) throw ParseError(at_line(line_no) + ": properties must be an object");
    for (const auto& [name, value] : props.items()) {
      if (!declared.count(name)) {
        throw ParseError(at_line(line_no) + ": property '" + name + "' not declared in header");
      }
      record.properties[name] = number_at(value, line_no, "property value");
    }
  }
  return record;
}

}  // namespace

std::vector<Crystal> Dataset::crystals() const {
  std::vector<Crystal> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.crystal);
  return out;
}

Dataset parse_dataset(const std::string& text, const ElementTable& table) {
  Dataset dataset;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_header = false;
  std::set<std::string> declared;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(at_line(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!have_header) {
      if (!obj.is_object() || !obj.contains("schema_version") || !obj.contains("property_names")) {
        throw ParseError(at_line(line_no) + ": expected header {schema_version, property_names}");
      }
      if (!obj["schema_version"].is_number_integer() ||
          obj["schema_version"].get<int>() != kDatasetSchemaVersion) {
        throw ParseError(at_line(line_no) + ": unsupported schema_version");
      }
      if (!obj["property_names"].is_array()) {
        throw ParseError(at_line(line_no) + ": property_names must be an array");
      }
      for (const auto& name : obj["property_names"]) {
        if (!name.is_string()) throw ParseError(at_line(line_no) + ": property names must be strings");
        dataset.property_names.push_back(name.get<std::string>());
        declared.insert(name.get<std::string>());
      }
      have_header = true;
      continue;
    }
    CrystalRecord record = parse_record(obj, line_no, declared, table);
    if (!seen_ids.insert(record.identifier).second) {
      throw ParseError(at_line(line_no) + ": duplicate id '" + record.identifier + "'");
    }
    dataset.records.push_back(std::move(record));
  }
  if (!have_header) throw ParseError("dataset has no header line");
  return dataset;
}

Dataset load_dataset(const std::filesystem::path& path, const ElementTable& table) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str(), table);
}

std::string format_dataset(const Dataset& dataset, int significant_digits) {
  auto num = [significant_digits](double x) { return round_significant(x, significant_digits); };
  std::ostringstream out;
  json header = {{"schema_version", kDatasetSchemaVersion}, {"property_names", dataset.property_names}};
  out << header.dump() << '\n';
  for (const auto& record : dataset.records) {
    json obj;
    obj["id"] = record.identifier;
    const Mat3& rows = record.crystal.lattice().rows();
    json lattice = json::array();
    for (int i = 0; i < 3; ++i) lattice.push_back({num(rows(i, 0)), num(rows(i, 1)), num(rows(i, 2))});
    obj["lattice"] = lattice;
    obj["species"] = record.crystal.species();
    json coords = json::array();
    const Coords& frac = record.crystal.frac_coords();
    for (Eigen::Index i = 0; i < frac.rows(); ++i) {
      // Rounding can carry 0.9999999999996 up to 1; keep the [0,1) invariant.
      coords.push_back({wrap_frac(num(frac(i, 0))), wrap_frac(num(frac(i, 1))), wrap_frac(num(frac(i, 2)))});
    }
    obj["frac_coords"] = coords;
    json props = json::object();
    for (const auto& [name, value] : record.properties) props[name] = num(value);
    obj["properties"] = props;
    out << obj.dump() << '\n';
  }
  return out.str();
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset, int significant_digits) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset " + path.string());
  out << format_dataset(dataset, significant_digits);
  if (!out) throw IoError("failed writing dataset " + path.string());
}

Dataset make_dataset(const std::vector<Crystal>& crystals, const std::string& prefix) {
  Dataset dataset;
  for (std::size_t i = 0; i < crystals.size(); ++i) {
    dataset.records.push_back({prefix + "-" + std::to_string(i), crystals[i], {}});
  }
  return dataset;
}

}  // namespace xtalgen::io
