// SSA control-flow-graph IR: modules, functions, blocks, instructions,
// terminators, and the single linear little-endian memory image.
//
// Conventions:
//  - Values are function-local ids (ValueId) with a name and scalar type.
//  - Blocks pass values across edges explicitly via block parameters; a use
//    not routed through a parameter must be dominated by its definition
//    (checked by validate(), not enforced structurally).
//  - All integer arithmetic wraps (two's complement); i32 values are kept
//    zero-extended in 64-bit slots.
//  - The first block of a function is its entry block; it takes no params.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace peval {

enum class ScalarType : uint8_t { I32, I64 };

const char* to_string(ScalarType t);

using ValueId = uint32_t;
inline constexpr ValueId kNoValue = ~ValueId(0);

enum class Opcode : uint8_t {
  ConstI64,
  ConstI32,
  Iadd,
  Isub,
  Imul,
  Iand,
  Ior,
  Ixor,
  Ishl,
  IshrU,
  IcmpEq,
  IcmpNe,
  IcmpLtU,
  IcmpLtS,
  Select,
  Zext,
  Trunc,
  Load8U,
  Load32,
  Load64,
  Store8,
  Store32,
  Store64,
  Call,
  Intrinsic,
  PrintI64,
};

enum class IntrinsicOp : uint8_t {
  PushContext,
  UpdateContext,
  PopContext,
  AssertConst,
  SpecializedValue,
  LoadRegister,
  StoreRegister,
  LocalRead,
  LocalWrite,
  StackPush,
  StackPop,
  StackRead,
  StackWrite,
  Flush,
};

struct OpcodeInfo {
  const char* name;
  int num_args;  // -1: variadic (call)
  bool has_result;
  bool is_pure;  // no memory access / side effect; foldable
};

const OpcodeInfo& opcode_info(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);

struct IntrinsicInfo {
  const char* name;
  int num_args;
  bool has_result;
};

const IntrinsicInfo& intrinsic_info(IntrinsicOp op);
std::optional<IntrinsicOp> intrinsic_from_name(std::string_view name);

// Byte count accessed by a load/store opcode; 0 for non-memory ops.
unsigned memory_access_size(Opcode op);

struct Instruction {
  ValueId result = kNoValue;
  Opcode op = Opcode::ConstI64;
  std::vector<ValueId> args;
  uint64_t imm = 0;          // ConstI64/ConstI32 payload
  std::string callee;        // Call target
  IntrinsicOp intrinsic = IntrinsicOp::Flush;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

enum class TermKind : uint8_t { Br, BrIf, BrTable, Return, Trap };

struct Edge {
  uint32_t target = 0;  // block index within the function
  std::vector<ValueId> args;

  friend bool operator==(const Edge&, const Edge&) = default;
};

// Br:      edges = [target]
// BrIf:    value = condition, edges = [then, else]
// BrTable: value = selector, edges = [t0..tn-1, default]
// Return:  value = returned value or kNoValue
// Trap:    message
struct Terminator {
  TermKind kind = TermKind::Return;
  ValueId value = kNoValue;
  std::vector<Edge> edges;
  std::string message;

  friend bool operator==(const Terminator&, const Terminator&) = default;
};

struct Block {
  std::string label;
  std::vector<ValueId> params;
  std::vector<Instruction> insts;
  Terminator term;

  friend bool operator==(const Block&, const Block&) = default;
};

struct ValueInfo {
  std::string name;
  ScalarType type = ScalarType::I64;

  friend bool operator==(const ValueInfo&, const ValueInfo&) = default;
};

struct Function {
  std::string name;
  std::vector<ValueId> params;
  std::optional<ScalarType> result;
  std::vector<Block> blocks;  // blocks[0] is the entry block
  std::vector<ValueInfo> values;

  ScalarType value_type(ValueId v) const { return values[v].type; }
  const std::string& value_name(ValueId v) const { return values[v].name; }
  const Block* find_block(std::string_view label) const;

  friend bool operator==(const Function&, const Function&) = default;
};

struct Segment {
  uint64_t offset = 0;
  std::vector<uint8_t> bytes;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct MemoryImage {
  uint64_t size = 0;
  std::vector<Segment> segments;

  // Expands segments over a zero background.
  std::vector<uint8_t> flatten() const;
  // Little-endian read of `n` bytes (n <= 8) at `addr`; caller checks bounds.
  uint64_t read_le(uint64_t addr, unsigned n) const;

  friend bool operator==(const MemoryImage&, const MemoryImage&) = default;
};

struct Module {
  MemoryImage memory;
  std::vector<Function> functions;
  std::string entry;  // optional entry function name; empty if none

  const Function* find_function(std::string_view name) const;
  Function* find_function(std::string_view name);

  friend bool operator==(const Module&, const Module&) = default;
};

// Scalar result type of an instruction, given the function it lives in
// (some opcodes take their type from their operands). nullopt when the
// opcode produces no value.
std::optional<ScalarType> result_type(const Function& f, const Instruction& inst);

// Operand width for arithmetic/compare opcodes; taken from the first
// argument's type. Memory and fixed-width ops ignore this.
ScalarType operand_type(const Function& f, const Instruction& inst);

}  // namespace peval
