#include "peval/ir.hpp"

#include <algorithm>
#include <array>
#include <cassert>
#include <cstring>

namespace peval {

const char* to_string(ScalarType t) { return t == ScalarType::I32 ? "i32" : "i64"; }

namespace {

constexpr std::array<OpcodeInfo, 26> kOpcodeTable = {{
    {"const.i64", 0, true, true},
    {"const.i32", 0, true, true},
    {"iadd", 2, true, true},
    {"isub", 2, true, true},
    {"imul", 2, true, true},
    {"iand", 2, true, true},
    {"ior", 2, true, true},
    {"ixor", 2, true, true},
    {"ishl", 2, true, true},
    {"ishr_u", 2, true, true},
    {"icmp.eq", 2, true, true},
    {"icmp.ne", 2, true, true},
    {"icmp.lt_u", 2, true, true},
    {"icmp.lt_s", 2, true, true},
    {"select", 3, true, true},
    {"zext", 1, true, true},
    {"trunc", 1, true, true},
    {"load.8u", 1, true, false},
    {"load.32", 1, true, false},
    {"load.64", 1, true, false},
    {"store.8", 2, false, false},
    {"store.32", 2, false, false},
    {"store.64", 2, false, false},
    {"call", -1, false, false},  // result presence depends on callee
    {"intrinsic", -1, false, false},
    {"print.i64", 1, false, false},
}};

constexpr std::array<IntrinsicInfo, 14> kIntrinsicTable = {{
    {"push_context", 1, false},
    {"update_context", 1, false},
    {"pop_context", 0, false},
    {"assert_const", 1, false},
    {"specialized_value", 3, true},
    {"load_register", 1, true},
    {"store_register", 2, false},
    {"local_read", 2, true},
    {"local_write", 3, false},
    {"stack_push", 2, false},
    {"stack_pop", 1, true},
    {"stack_read", 2, true},
    {"stack_write", 3, false},
    {"flush", 0, false},
}};

}  // namespace

const OpcodeInfo& opcode_info(Opcode op) { return kOpcodeTable[static_cast<size_t>(op)]; }

std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (size_t i = 0; i < kOpcodeTable.size(); i++) {
    if (name == kOpcodeTable[i].name) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

const IntrinsicInfo& intrinsic_info(IntrinsicOp op) {
  return kIntrinsicTable[static_cast<size_t>(op)];
}

std::optional<IntrinsicOp> intrinsic_from_name(std::string_view name) {
  for (size_t i = 0; i < kIntrinsicTable.size(); i++) {
    if (name == kIntrinsicTable[i].name) return static_cast<IntrinsicOp>(i);
  }
  return std::nullopt;
}

unsigned memory_access_size(Opcode op) {
  switch (op) {
    case Opcode::Load8U:
    case Opcode::Store8:
      return 1;
    case Opcode::Load32:
    case Opcode::Store32:
      return 4;
    case Opcode::Load64:
    case Opcode::Store64:
      return 8;
    default:
      return 0;
  }
}

const Block* Function::find_block(std::string_view label) const {
  for (const Block& b : blocks) {
    if (b.label == label) return &b;
  }
  return nullptr;
}

std::vector<uint8_t> MemoryImage::flatten() const {
  std::vector<uint8_t> bytes(size, 0);
  for (const Segment& seg : segments) {
    if (seg.offset > bytes.size()) continue;
    size_t n = std::min<size_t>(seg.bytes.size(), bytes.size() - seg.offset);
    std::memcpy(bytes.data() + seg.offset, seg.bytes.data(), n);
  }
  return bytes;
}

uint64_t MemoryImage::read_le(uint64_t addr, unsigned n) const {
  assert(n <= 8);
  uint64_t out = 0;
  for (unsigned i = 0; i < n; i++) {
    uint64_t a = addr + i;
    uint8_t byte = 0;
    for (const Segment& seg : segments) {
      if (a >= seg.offset && a - seg.offset < seg.bytes.size()) {
        byte = seg.bytes[a - seg.offset];
      }
    }
    out |= uint64_t(byte) << (8 * i);
  }
  return out;
}

const Function* Module::find_function(std::string_view name) const {
  for (const Function& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

Function* Module::find_function(std::string_view name) {
  for (Function& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::optional<ScalarType> result_type(const Function& f, const Instruction& inst) {
  switch (inst.op) {
    case Opcode::ConstI64:
      return ScalarType::I64;
    case Opcode::ConstI32:
      return ScalarType::I32;
    case Opcode::Iadd:
    case Opcode::Isub:
    case Opcode::Imul:
    case Opcode::Iand:
    case Opcode::Ior:
    case Opcode::Ixor:
    case Opcode::Ishl:
    case Opcode::IshrU:
      return inst.args.empty() ? ScalarType::I64 : f.value_type(inst.args[0]);
    case Opcode::IcmpEq:
    case Opcode::IcmpNe:
    case Opcode::IcmpLtU:
    case Opcode::IcmpLtS:
      return ScalarType::I32;
    case Opcode::Select:
      return inst.args.size() < 2 ? ScalarType::I64 : f.value_type(inst.args[1]);
    case Opcode::Zext:
      return ScalarType::I64;
    case Opcode::Trunc:
      return ScalarType::I32;
    case Opcode::Load8U:
      return ScalarType::I64;
    case Opcode::Load32:
      return ScalarType::I32;
    case Opcode::Load64:
      return ScalarType::I64;
    case Opcode::Store8:
    case Opcode::Store32:
    case Opcode::Store64:
    case Opcode::PrintI64:
      return std::nullopt;
    case Opcode::Call:
      // The caller must consult the callee's signature; parse/validate store
      // the resolved type on the result value.
      return inst.result == kNoValue ? std::nullopt
                                     : std::optional(f.value_type(inst.result));
    case Opcode::Intrinsic:
      return intrinsic_info(inst.intrinsic).has_result ? std::optional(ScalarType::I64)
                                                       : std::nullopt;
  }
  return std::nullopt;
}

ScalarType operand_type(const Function& f, const Instruction& inst) {
  if (inst.op == Opcode::Select) {
    return inst.args.size() < 2 ? ScalarType::I64 : f.value_type(inst.args[1]);
  }
  return inst.args.empty() ? ScalarType::I64 : f.value_type(inst.args[0]);
}

}  // namespace peval
