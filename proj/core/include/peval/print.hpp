#pragma once

#include <string>

#include "peval/ir.hpp"

namespace peval {

// Canonical textual form; parse_module(print_module(m)) == m for any
// structurally well-formed module.
std::string print_module(const Module& m);
std::string print_function(const Function& f);

}  // namespace peval
