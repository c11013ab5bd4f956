#pragma once

#include <string>
#include <vector>

#include "peval/ir.hpp"

namespace peval {

struct Diagnostic {
  std::string function;  // empty for module-level issues
  std::string block;
  std::string message;

  std::string format() const;
};

// Structural and semantic checks: unique names, single SSA definitions,
// opcode/terminator arity and types, edge-arg/param agreement, memory
// segment bounds, and def-dominates-use. Returns an empty list iff the
// module is valid; never throws.
std::vector<Diagnostic> validate(const Module& m);

std::string format_diagnostics(const std::vector<Diagnostic>& diags);

}  // namespace peval
