#include "peval/absint.hpp"

#include "peval/exec.hpp"

namespace peval {

namespace {
bool g_transfer_fault = false;
}

void set_transfer_fault_for_testing(bool enabled) { g_transfer_fault = enabled; }

AbstractValue meet(const AbstractValue& a, const AbstractValue& b) {
  if (!a.is_const() || !b.is_const()) return AbstractValue::unknown();
  if (a.type != b.type) return AbstractValue::unknown();
  if (a.value != b.value) return AbstractValue::unknown();
  return a;
}

AbstractValue transfer(Opcode op, ScalarType type, std::span<const AbstractValue> args,
                       const ConstRanges& ranges, const MemoryImage& memory,
                       uint64_t imm) {
  switch (op) {
    case Opcode::ConstI64:
      return AbstractValue::constant(ScalarType::I64, imm);
    case Opcode::ConstI32:
      return AbstractValue::constant(ScalarType::I32, imm);

    case Opcode::Load8U:
    case Opcode::Load32:
    case Opcode::Load64: {
      if (args.empty() || !args[0].is_const()) return AbstractValue::unknown();
      unsigned size = memory_access_size(op);
      uint64_t addr = args[0].value;
      for (const ConstRange& r : ranges) {
        if (r.contains_span(addr, size)) {
          uint64_t v = memory.read_le(addr, size);
          ScalarType rt = op == Opcode::Load32 ? ScalarType::I32 : ScalarType::I64;
          return AbstractValue::constant(rt, v);
        }
      }
      return AbstractValue::unknown();
    }

    case Opcode::Store8:
    case Opcode::Store32:
    case Opcode::Store64:
    case Opcode::Call:
    case Opcode::Intrinsic:
    case Opcode::PrintI64:
      return AbstractValue::unknown();

    default: {
      // Pure data op: fold through the executor's scalar semantics.
      uint64_t vals[3];
      for (size_t i = 0; i < args.size(); i++) {
        if (!args[i].is_const()) return AbstractValue::unknown();
        vals[i] = args[i].value;
      }
      uint64_t v = eval_scalar(op, type, std::span<const uint64_t>(vals, args.size()));
      if (g_transfer_fault && op == Opcode::Iadd) v += 1;
      ScalarType rt;
      switch (op) {
        case Opcode::IcmpEq:
        case Opcode::IcmpNe:
        case Opcode::IcmpLtU:
        case Opcode::IcmpLtS:
        case Opcode::Trunc:
          rt = ScalarType::I32;
          break;
        case Opcode::Zext:
          rt = ScalarType::I64;
          break;
        default:
          rt = type;
          break;
      }
      return AbstractValue::constant(rt, v);
    }
  }
}

}  // namespace peval
