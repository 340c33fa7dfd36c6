#pragma once

#include <string>

#include "xtalgen/core/crystal.hpp"

namespace xtalgen::io {

// P1 CIF with cell parameters and one atom-site row per atom.
std::string emit_cif(const Crystal& crystal, const std::string& data_name = "generated");

// Reads the P1 subset written by emit_cif (and most simple P1 files): the six
// _cell_ parameters and an _atom_site_ loop with fractional coordinates.
// Symmetry operators are ignored. Throws ParseError.
Crystal parse_cif(const std::string& text);

}  // namespace xtalgen::io
