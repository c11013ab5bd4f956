#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "peval/ir.hpp"

namespace peval {

struct ParseError : std::runtime_error {
  ParseError(int line, int column, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ":" +
                           std::to_string(column) + ": " + message),
        line(line),
        column(column) {}

  int line;
  int column;
};

// Parses the textual IR form. Throws ParseError on malformed input;
// the result is structurally well-formed but not necessarily valid
// (run validate() for SSA/type/dominance checks).
Module parse_module(std::string_view text);

}  // namespace peval
