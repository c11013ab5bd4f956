// Two-level constant-propagation lattice (Unknown / Const) and the
// per-instruction transfer functions used by the specializer, including
// folding of loads from memory ranges promised constant by a request.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "peval/ir.hpp"

namespace peval {

struct AbstractValue {
  enum class Kind : uint8_t { Unknown, Const };

  Kind kind = Kind::Unknown;
  ScalarType type = ScalarType::I64;
  uint64_t value = 0;

  bool is_const() const { return kind == Kind::Const; }

  static AbstractValue unknown() { return {}; }
  static AbstractValue constant(ScalarType t, uint64_t v) {
    return {Kind::Const, t, t == ScalarType::I32 ? (v & 0xffffffffu) : v};
  }

  friend bool operator==(const AbstractValue&, const AbstractValue&) = default;
};

struct ConstRange {
  uint64_t start = 0;
  uint64_t len = 0;

  bool contains_span(uint64_t addr, uint64_t size) const {
    return addr >= start && size <= len && addr - start <= len - size;
  }
};

using ConstRanges = std::vector<ConstRange>;

// Lattice meet. Consts of mismatched scalar type meet to Unknown (a
// validator gap, not a crash).
AbstractValue meet(const AbstractValue& a, const AbstractValue& b);

// Abstract result of one opcode application. Returns Const iff the result
// is fully determined: all args Const for pure ops; for loads, a Const
// address whose whole accessed span lies inside one ConstRange (folded from
// the memory image). Stores, calls, prints, and anything doubtful yield
// Unknown.
AbstractValue transfer(Opcode op, ScalarType type, std::span<const AbstractValue> args,
                       const ConstRanges& ranges, const MemoryImage& memory,
                       uint64_t imm = 0);

// Test-only fault injection: makes transfer misfold iadd so the
// differential fuzz harness can prove it catches real bugs.
void set_transfer_fault_for_testing(bool enabled);

}  // namespace peval
