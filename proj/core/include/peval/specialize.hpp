// Context-keyed worklist specialization of a generic function against a
// specialization request: the partial-evaluation transform. Also the
// intrinsic polyfill that lowers annotations back to plain IR so the
// annotated interpreter remains directly executable.
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "peval/absint.hpp"
#include "peval/ir.hpp"

namespace peval {

enum class ArgModeKind : uint8_t { RunTime, Const, Memory };

struct ArgMode {
  ArgModeKind kind = ArgModeKind::RunTime;
  uint64_t value = 0;  // Const payload
  uint64_t addr = 0;   // Memory range
  uint64_t len = 0;

  static ArgMode runtime() { return {}; }
  static ArgMode constant(uint64_t v) { return {ArgModeKind::Const, v, 0, 0}; }
  static ArgMode memory(uint64_t addr, uint64_t len) {
    return {ArgModeKind::Memory, 0, addr, len};
  }
};

struct SpecializationRequest {
  std::string target;
  std::string output_name;
  std::vector<ArgMode> arg_modes;
};

// Request file: line-oriented text. Each request starts with a `target`
// line; `#` or `;` start comments.
//   target <func>
//   output <name>
//   arg <i> runtime
//   arg <i> const <u64>
//   arg <i> memory <addr> <len>
std::vector<SpecializationRequest> parse_requests(std::string_view text);

enum class SsaRepairMode : uint8_t { Hsca, Naive };

struct SpecializeOptions {
  SsaRepairMode repair = SsaRepairMode::Hsca;
  uint64_t max_contexts = 100'000;
  uint64_t max_rebuilds_per_block = 1'000;
  uint64_t value_split_bound = 256;
};

struct SpecializeStats {
  uint64_t contexts = 0;
  uint64_t blocks = 0;
  uint64_t rebuilds = 0;
  uint64_t added_params = 0;   // block params introduced by SSA repair
  uint64_t cut_points = 0;
  bool naive_fallback = false;  // HSCA renaming failed; fell back to naive
};

struct SpecializeError : std::runtime_error {
  enum class Kind {
    BadRequest,
    NonConstContext,
    AssertConstFailed,
    PopEmptyContext,
    NonConstSplitBounds,
    SplitRangeTooWide,
    NonConstRegisterIndex,
    NonConstStateIndex,
    ContextCeiling,
    RebuildCeiling,
    Internal,
  };

  SpecializeError(Kind kind, const std::string& location, const std::string& message)
      : std::runtime_error(message + (location.empty() ? "" : " at " + location)),
        kind(kind),
        location(location) {}

  Kind kind;
  std::string location;
};

// Specializes req.target against the request's promises and returns the new
// function (same signature as the target; specialized parameters are
// retained but ignored by the body). The input module must validate.
Function specialize_function(const Module& m, const SpecializationRequest& req,
                             const SpecializeOptions& opts = {},
                             SpecializeStats* stats = nullptr);

// Convenience wrapper matching the module-level contract: returns a copy of
// the input with the specialized function appended.
Module specialize(const Module& m, const SpecializationRequest& req,
                  const SpecializeOptions& opts = {}, SpecializeStats* stats = nullptr);

// Lowers every intrinsic to plain IR:
//  - context intrinsics and assert_const vanish;
//  - specialized_value passes its value operand through;
//  - register intrinsics become loads/stores into a fresh 256-slot scratch
//    region appended to module memory (one region per function that needs
//    it; indices are masked to 8 bits);
//  - local/stack intrinsics become eager loads/stores at their canonical
//    addresses; flush becomes a no-op.
struct PolyfillResult {
  Module module;
  // Scratch region per function name, for excluding from memory diffs.
  std::vector<std::pair<std::string, ConstRange>> scratch_regions;
};

PolyfillResult polyfill_intrinsics(const Module& m);

// Per-function form; scratch_base is where register slots live (the caller
// reserves 2048 bytes there). Functions without register intrinsics ignore it.
Function polyfill_function(const Function& f, uint64_t scratch_base);

}  // namespace peval
