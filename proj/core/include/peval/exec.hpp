#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "peval/ir.hpp"

namespace peval {

inline constexpr uint64_t kDefaultFuel = 100'000'000;

struct ExecMetrics {
  uint64_t insts_executed = 0;  // includes terminators
  uint64_t loads = 0;
  uint64_t stores = 0;
  uint64_t branches = 0;  // terminator executions
  std::map<std::string, uint64_t> loads_in_range;
  std::map<std::string, uint64_t> stores_in_range;
  std::vector<uint64_t> prints;
};

struct WatchRange {
  std::string label;
  uint64_t start = 0;
  uint64_t len = 0;
};

struct ExecResult {
  bool trapped = false;
  uint64_t value = 0;  // meaningful when !trapped and function returns a value
  bool has_value = false;
  std::string trap_message;
  ExecMetrics metrics;
  std::vector<uint8_t> final_memory;
};

// Reference big-step interpreter for the IR; the semantic oracle.
// Preconditions: the module validates and `func` contains no raw
// intrinsics (polyfill first) -- violating either traps.
// Exhausting `fuel` traps with "out of fuel".
ExecResult run(const Module& m, std::string_view func, std::span<const uint64_t> args,
               std::span<const WatchRange> watches = {}, uint64_t fuel = kDefaultFuel);

// Concrete semantics of the pure data opcodes, shared with the constant
// folder. `type` is the operand width; values are canonical (i32 values
// zero-extended). Wrapping arithmetic throughout.
uint64_t eval_scalar(Opcode op, ScalarType type, std::span<const uint64_t> args);

}  // namespace peval
