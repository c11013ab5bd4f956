// Min: a small 64-bit unsigned integer register machine used as the
// flagship interpreter example. Bytecode is a flat sequence of 64-bit
// words; each operand is one word following the opcode word. The machine
// has 256 registers, an accumulator, and a program counter.
//
// Opcode set (SWITCH4 is a testing extension with four jump targets):
//   0 LOAD_IMMEDIATE imm      acc = imm
//   1 LOAD_REG idx            acc = regs[idx]
//   2 STORE_REG idx           regs[idx] = acc
//   3 ADD i j                 acc = regs[i] + regs[j]
//   4 SUB i j                 acc = regs[i] - regs[j]
//   5 MUL i j                 acc = regs[i] * regs[j]
//   6 JMP t                   pc = t
//   7 JMPNZ t                 if (acc != 0) pc = t
//   8 PRINT                   print acc
//   9 HALT                    return acc
//  10 SWITCH4 t0 t1 t2 t3     pc = t[acc & 3]
//
// The interpreter function has signature (program: i64, input: i64) -> i64;
// `program` is the bytecode base address and `input` seeds the accumulator
// (an artifact convention: it gives requests a runtime argument and makes
// input-driven branches easy to exercise). All arithmetic is unsigned and
// wraps modulo 2^64, matching the IR's semantics; registers start at zero.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "peval/exec.hpp"
#include "peval/ir.hpp"
#include "peval/specialize.hpp"

namespace peval::minvm {

enum class MinOp : uint64_t {
  LoadImmediate = 0,
  LoadReg = 1,
  StoreReg = 2,
  Add = 3,
  Sub = 4,
  Mul = 5,
  Jmp = 6,
  Jmpnz = 7,
  Print = 8,
  Halt = 9,
  Switch4 = 10,
};

// Operand words following the opcode word.
int min_op_arity(MinOp op);

struct MinProgram {
  std::vector<uint64_t> words;
};

inline constexpr uint64_t kBytecodeBase = 4096;
inline constexpr uint64_t kRegisterBase = 256;  // plain-variant register file
inline constexpr uint64_t kRegisterCount = 256;

// One instruction per line, `label:` definitions, `;` comments. Jump
// operands may be labels or absolute word indices (checked against
// instruction boundaries). Register operands must be < 256. Programs must
// end in HALT or JMP.
MinProgram assemble(std::string_view text);

struct InterpreterOptions {
  // Registers through load_register/store_register instead of the
  // in-memory register file.
  bool state_intrinsics = false;
  // JMPNZ and SWITCH4 via specialized_value instead of distinct backedges.
  bool value_split_branches = false;
};

Function build_min_interpreter(const InterpreterOptions& opts, std::string name);

// Module containing @emit, the named interpreter variants, and the program
// image at kBytecodeBase.
Module build_min_module(
    const MinProgram& program,
    std::span<const std::pair<std::string, InterpreterOptions>> variants);

// Default pair: @min_plain and @min_state, both with two-backedge branches.
Module build_min_module(const MinProgram& program);

// Request promising the program image constant; the input stays runtime.
SpecializationRequest make_request(const std::string& target, const MinProgram& program,
                                   const std::string& output);

WatchRange bytecode_watch(const MinProgram& program);
WatchRange register_watch();

struct BenchRow {
  std::string config;
  uint64_t insts = 0;
  uint64_t loads = 0;
  uint64_t stores = 0;
  uint64_t bytecode_loads = 0;
  double ratio = 0.0;  // interp-plain insts / this config's insts
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::string format_table() const;
  std::string format_csv() const;
};

// configs from {"interp-plain", "interp-state", "specialized-plain",
// "specialized-state"}; interp-plain is always measured to anchor ratios.
BenchReport bench(const MinProgram& program, std::span<const std::string> configs,
                  uint64_t input = 0, uint64_t fuel = kDefaultFuel);

// Same, but over a caller-provided module (e.g. a parsed interpreter file)
// that must define @min_plain and @min_state. The program image is
// installed at kBytecodeBase first.
BenchReport bench_on(const Module& interpreters, const MinProgram& program,
                     std::span<const std::string> configs, uint64_t input = 0,
                     uint64_t fuel = kDefaultFuel);

// Installs the program image at kBytecodeBase, growing memory as needed.
// Fails if an existing data segment overlaps the bytecode region.
void install_program(Module& m, const MinProgram& program);

// Structurally valid random Min program with bounded loop trip counts.
MinProgram generate_program(uint64_t seed);

}  // namespace peval::minvm
