#include "peval/minvm.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "peval/parse.hpp"

namespace peval::minvm {

int min_op_arity(MinOp op) {
  switch (op) {
    case MinOp::LoadImmediate:
    case MinOp::LoadReg:
    case MinOp::StoreReg:
    case MinOp::Jmp:
    case MinOp::Jmpnz:
      return 1;
    case MinOp::Add:
    case MinOp::Sub:
    case MinOp::Mul:
      return 2;
    case MinOp::Print:
    case MinOp::Halt:
      return 0;
    case MinOp::Switch4:
      return 4;
  }
  return 0;
}

namespace {

const std::map<std::string, MinOp, std::less<>> kMnemonics = {
    {"LOAD_IMMEDIATE", MinOp::LoadImmediate},
    {"LOAD_REG", MinOp::LoadReg},
    {"STORE_REG", MinOp::StoreReg},
    {"ADD", MinOp::Add},
    {"SUB", MinOp::Sub},
    {"MUL", MinOp::Mul},
    {"JMP", MinOp::Jmp},
    {"JMPNZ", MinOp::Jmpnz},
    {"PRINT", MinOp::Print},
    {"HALT", MinOp::Halt},
    {"SWITCH4", MinOp::Switch4},
};

bool is_jump_operand(MinOp op, int operand_index) {
  return op == MinOp::Jmp || op == MinOp::Jmpnz ||
         (op == MinOp::Switch4 && operand_index >= 0);
}

bool is_register_operand(MinOp op, int operand_index) {
  switch (op) {
    case MinOp::LoadReg:
    case MinOp::StoreReg:
    case MinOp::Add:
    case MinOp::Sub:
    case MinOp::Mul:
      return true;
    default:
      (void)operand_index;
      return false;
  }
}

}  // namespace

MinProgram assemble(std::string_view text) {
  struct PendingOperand {
    size_t word_index;
    std::string label;
    int line;
  };

  MinProgram program;
  std::map<std::string, uint64_t> labels;       // label -> word index
  std::vector<PendingOperand> pending;
  std::set<uint64_t> boundaries;                // instruction start indices
  std::vector<MinOp> instruction_ops;

  std::istringstream stream{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(stream, line)) {
    lineno++;
    size_t cut = line.find(';');
    if (cut != std::string::npos) line.resize(cut);

    std::istringstream ls(line);
    std::string tok;
    while (ls >> tok) {
      if (tok.back() == ':') {
        std::string name = tok.substr(0, tok.size() - 1);
        if (name.empty()) throw ParseError(lineno, 1, "empty label");
        if (!labels.emplace(name, program.words.size()).second) {
          throw ParseError(lineno, 1, "duplicate label '" + name + "'");
        }
        continue;
      }
      std::string upper = tok;
      std::transform(upper.begin(), upper.end(), upper.begin(),
                     [](unsigned char c) { return std::toupper(c); });
      auto it = kMnemonics.find(upper);
      if (it == kMnemonics.end()) {
        throw ParseError(lineno, 1, "unknown mnemonic '" + tok + "'");
      }
      MinOp op = it->second;
      boundaries.insert(program.words.size());
      instruction_ops.push_back(op);
      program.words.push_back(uint64_t(op));
      for (int i = 0; i < min_op_arity(op); i++) {
        std::string operand;
        if (!(ls >> operand)) {
          throw ParseError(lineno, 1, upper + " expects " +
                                          std::to_string(min_op_arity(op)) + " operands");
        }
        if (std::isdigit(static_cast<unsigned char>(operand[0]))) {
          uint64_t v = std::stoull(operand);
          if (is_register_operand(op, i) && v >= kRegisterCount) {
            throw ParseError(lineno, 1, "register operand " + operand + " out of range");
          }
          program.words.push_back(v);
        } else if (is_jump_operand(op, i)) {
          pending.push_back({program.words.size(), operand, lineno});
          program.words.push_back(0);
        } else {
          throw ParseError(lineno, 1, "operand '" + operand + "' must be a number");
        }
      }
      // Reject trailing garbage that is not a new label/instruction? A
      // single instruction per line keeps listings readable; further tokens
      // on the line are treated as more instructions, which the loop
      // already handles.
    }
  }

  if (instruction_ops.empty()) throw ParseError(lineno, 1, "empty program");

  for (const PendingOperand& p : pending) {
    auto it = labels.find(p.label);
    if (it == labels.end()) {
      throw ParseError(p.line, 1, "unresolved label '" + p.label + "'");
    }
    program.words[p.word_index] = it->second;
  }
  // All jump targets must be instruction boundaries.
  for (size_t w = 0; w < program.words.size();) {
    MinOp op = MinOp(program.words[w]);
    for (int i = 0; i < min_op_arity(op); i++) {
      if (is_jump_operand(op, i) && !boundaries.count(program.words[w + 1 + i])) {
        throw ParseError(0, 0, "jump target " + std::to_string(program.words[w + 1 + i]) +
                                   " is not an instruction boundary");
      }
    }
    w += 1 + min_op_arity(op);
  }
  // Every non-jump path must end the program.
  MinOp last = instruction_ops.back();
  if (last != MinOp::Halt && last != MinOp::Jmp) {
    throw ParseError(0, 0, "program must end with HALT or JMP");
  }
  return program;
}

// ---------------------------------------------------------------------
// Interpreter builder

namespace {

class FnBuilder {
 public:
  explicit FnBuilder(std::string name) { f_.name = std::move(name); }

  ValueId param(const std::string& n, ScalarType t) {
    ValueId v = value(n, t);
    f_.params.push_back(v);
    return v;
  }
  void result(ScalarType t) { f_.result = t; }

  void begin_block(const std::string& label) {
    Block b;
    b.label = label;
    labels_.emplace(label, uint32_t(f_.blocks.size()));
    f_.blocks.push_back(std::move(b));
  }
  ValueId block_param(const std::string& n, ScalarType t) {
    ValueId v = value(n, t);
    f_.blocks.back().params.push_back(v);
    return v;
  }

  ValueId iconst(uint64_t imm, const std::string& n = "c") {
    ValueId v = value(n, ScalarType::I64);
    f_.blocks.back().insts.push_back(Instruction{v, Opcode::ConstI64, {}, imm});
    return v;
  }
  ValueId op(Opcode o, std::vector<ValueId> args, const std::string& n) {
    Instruction inst{kNoValue, o, std::move(args)};
    ValueId v = value(n, result_type(f_, inst).value_or(ScalarType::I64));
    inst.result = v;
    f_.blocks.back().insts.push_back(std::move(inst));
    return v;
  }
  void op_void(Opcode o, std::vector<ValueId> args) {
    f_.blocks.back().insts.push_back(Instruction{kNoValue, o, std::move(args)});
  }
  ValueId intr(IntrinsicOp i, std::vector<ValueId> args, const std::string& n) {
    ValueId v = value(n, ScalarType::I64);
    Instruction inst{v, Opcode::Intrinsic, std::move(args)};
    inst.intrinsic = i;
    f_.blocks.back().insts.push_back(std::move(inst));
    return v;
  }
  void intr_void(IntrinsicOp i, std::vector<ValueId> args) {
    Instruction inst{kNoValue, Opcode::Intrinsic, std::move(args)};
    inst.intrinsic = i;
    f_.blocks.back().insts.push_back(std::move(inst));
  }
  void call_void(const std::string& callee, std::vector<ValueId> args) {
    Instruction inst{kNoValue, Opcode::Call, std::move(args)};
    inst.callee = callee;
    f_.blocks.back().insts.push_back(std::move(inst));
  }

  void br(const std::string& label, std::vector<ValueId> args = {}) {
    f_.blocks.back().term =
        Terminator{TermKind::Br, kNoValue, {pending_edge(label, std::move(args))}, ""};
  }
  void br_if(ValueId cond, const std::string& t, std::vector<ValueId> ta,
             const std::string& e, std::vector<ValueId> ea) {
    f_.blocks.back().term =
        Terminator{TermKind::BrIf,
                   cond,
                   {pending_edge(t, std::move(ta)), pending_edge(e, std::move(ea))},
                   ""};
  }
  void br_table(ValueId sel,
                std::vector<std::pair<std::string, std::vector<ValueId>>> targets,
                const std::string& def, std::vector<ValueId> def_args = {}) {
    Terminator term{TermKind::BrTable, sel, {}, ""};
    for (auto& [label, args] : targets) {
      term.edges.push_back(pending_edge(label, std::move(args)));
    }
    term.edges.push_back(pending_edge(def, std::move(def_args)));
    f_.blocks.back().term = std::move(term);
  }
  void ret(ValueId v) { f_.blocks.back().term = Terminator{TermKind::Return, v, {}, ""}; }
  void ret() { f_.blocks.back().term = Terminator{TermKind::Return, kNoValue, {}, ""}; }
  void trap(const std::string& msg) {
    f_.blocks.back().term = Terminator{TermKind::Trap, kNoValue, {}, msg};
  }

  // Edges record labels in emission order; resolved here.
  Function finish() {
    size_t next = 0;
    for (Block& b : f_.blocks) {
      for (Edge& e : b.term.edges) {
        e.target = labels_.at(edge_labels_[next++]);
      }
    }
    return std::move(f_);
  }

 private:
  Edge pending_edge(const std::string& label, std::vector<ValueId> args) {
    edge_labels_.push_back(label);
    Edge e;
    e.target = 0;  // patched by finish()
    e.args = std::move(args);
    return e;
  }

  ValueId value(const std::string& n, ScalarType t) {
    std::string name = n;
    auto [it, inserted] = name_counts_.try_emplace(name, 0);
    if (!inserted) name += "." + std::to_string(++it->second);
    f_.values.push_back(ValueInfo{name, t});
    return ValueId(f_.values.size() - 1);
  }

  Function f_;
  std::map<std::string, uint32_t> labels_;
  std::map<std::string, int> name_counts_;
  std::vector<std::string> edge_labels_;
};

}  // namespace

Function build_min_interpreter(const InterpreterOptions& opts, std::string name) {
  FnBuilder b(std::move(name));
  ValueId program = b.param("program", ScalarType::I64);
  ValueId input = b.param("input", ScalarType::I64);
  b.result(ScalarType::I64);

  b.begin_block("entry");
  ValueId zero = b.iconst(0, "zero");
  b.intr_void(IntrinsicOp::PushContext, {zero});
  b.br("loop", {zero, input});

  // loop(pc, acc): fetch program[pc], advance, dispatch
  b.begin_block("loop");
  ValueId pc = b.block_param("pc", ScalarType::I64);
  ValueId acc = b.block_param("acc", ScalarType::I64);
  ValueId c8 = b.iconst(8, "c8");
  ValueId off = b.op(Opcode::Imul, {pc, c8}, "off");
  ValueId opaddr = b.op(Opcode::Iadd, {program, off}, "opaddr");
  ValueId opword = b.op(Opcode::Load64, {opaddr}, "op");
  ValueId one = b.iconst(1, "one");
  ValueId pc1 = b.op(Opcode::Iadd, {pc, one}, "pc1");
  ValueId op32 = b.op(Opcode::Trunc, {opword}, "op32");
  b.br_table(op32,
             {{"op_li", {}},
              {"op_lr", {}},
              {"op_sr", {}},
              {"op_add", {}},
              {"op_sub", {}},
              {"op_mul", {}},
              {"op_jmp", {}},
              {"op_jnz", {}},
              {"op_pr", {}},
              {"op_halt", {}},
              {"op_sw4", {}}},
             "op_bad");

  // program[pc1 + k]
  auto operand = [&](int k, const std::string& n) {
    ValueId idx = pc1;
    if (k > 0) {
      ValueId ck = b.iconst(uint64_t(k), "k" + std::to_string(k));
      idx = b.op(Opcode::Iadd, {pc1, ck}, n + "_pc");
    }
    ValueId e = b.iconst(8, "e8");
    ValueId o = b.op(Opcode::Imul, {idx, e}, n + "_off");
    ValueId a = b.op(Opcode::Iadd, {program, o}, n + "_addr");
    return b.op(Opcode::Load64, {a}, n);
  };
  auto next_pc = [&](int operands, const std::string& n) {
    ValueId ck = b.iconst(uint64_t(operands), "adv");
    return b.op(Opcode::Iadd, {pc1, ck}, n);
  };
  auto reg_read = [&](ValueId index, const std::string& n) {
    if (opts.state_intrinsics) {
      return b.intr(IntrinsicOp::LoadRegister, {index}, n);
    }
    ValueId base = b.iconst(kRegisterBase, "rb");
    ValueId e = b.iconst(8, "r8");
    ValueId o = b.op(Opcode::Imul, {index, e}, n + "_off");
    ValueId a = b.op(Opcode::Iadd, {base, o}, n + "_addr");
    return b.op(Opcode::Load64, {a}, n);
  };
  auto reg_write = [&](ValueId index, ValueId v) {
    if (opts.state_intrinsics) {
      b.intr_void(IntrinsicOp::StoreRegister, {index, v});
      return;
    }
    ValueId base = b.iconst(kRegisterBase, "rb");
    ValueId e = b.iconst(8, "r8");
    ValueId o = b.op(Opcode::Imul, {index, e}, "w_off");
    ValueId a = b.op(Opcode::Iadd, {base, o}, "w_addr");
    b.op_void(Opcode::Store64, {a, v});
  };
  auto backedge = [&](ValueId next, ValueId new_acc) {
    b.intr_void(IntrinsicOp::UpdateContext, {next});
    b.br("loop", {next, new_acc});
  };

  b.begin_block("op_li");
  {
    ValueId imm = operand(0, "imm");
    backedge(next_pc(1, "li_pc"), imm);
  }

  b.begin_block("op_lr");
  {
    ValueId idx = operand(0, "idx");
    ValueId v = reg_read(idx, "rv");
    backedge(next_pc(1, "lr_pc"), v);
  }

  b.begin_block("op_sr");
  {
    ValueId idx = operand(0, "idx");
    reg_write(idx, acc);
    backedge(next_pc(1, "sr_pc"), acc);
  }

  auto binary_op = [&](const std::string& label, Opcode o) {
    b.begin_block(label);
    ValueId i1 = operand(0, "i1");
    ValueId i2 = operand(1, "i2");
    ValueId r1 = reg_read(i1, "r1");
    ValueId r2 = reg_read(i2, "r2");
    ValueId v = b.op(o, {r1, r2}, "bin");
    backedge(next_pc(2, "bin_pc"), v);
  };
  binary_op("op_add", Opcode::Iadd);
  binary_op("op_sub", Opcode::Isub);
  binary_op("op_mul", Opcode::Imul);

  b.begin_block("op_jmp");
  {
    ValueId t = operand(0, "target");
    backedge(t, acc);
  }

  b.begin_block("op_jnz");
  if (!opts.value_split_branches) {
    // Two distinct backedges: the next pc is constant on each side.
    ValueId t = operand(0, "target");
    ValueId fall = next_pc(1, "fall_pc");
    ValueId z = b.iconst(0, "z");
    ValueId nz = b.op(Opcode::IcmpNe, {acc, z}, "nz");
    b.br_if(nz, "jnz_taken", {}, "jnz_fall", {});
    b.begin_block("jnz_taken");
    backedge(t, acc);
    b.begin_block("jnz_fall");
    backedge(fall, acc);
  } else {
    // One reconverged path; specialized_value splits the branch outcome
    // into per-value contexts so each side's next pc is constant again.
    ValueId t = operand(0, "target");
    ValueId fall = next_pc(1, "fall_pc");
    ValueId z = b.iconst(0, "z");
    ValueId nz = b.op(Opcode::IcmpNe, {acc, z}, "nz");
    ValueId nz64 = b.op(Opcode::Zext, {nz}, "nz64");
    ValueId lo = b.iconst(0, "lo");
    ValueId hi = b.iconst(1, "hi");
    ValueId sel = b.intr(IntrinsicOp::SpecializedValue, {nz64, lo, hi}, "sel");
    ValueId z2 = b.iconst(0, "z2");
    ValueId taken = b.op(Opcode::IcmpNe, {sel, z2}, "taken");
    ValueId next = b.op(Opcode::Select, {taken, t, fall}, "next");
    b.intr_void(IntrinsicOp::PopContext, {});
    backedge(next, acc);
  }

  b.begin_block("op_pr");
  {
    b.call_void("emit", {acc});
    backedge(next_pc(0, "pr_pc"), acc);
  }

  b.begin_block("op_halt");
  b.intr_void(IntrinsicOp::PopContext, {});
  b.ret(acc);

  b.begin_block("op_sw4");
  if (!opts.value_split_branches) {
    ValueId c3 = b.iconst(3, "c3");
    ValueId m = b.op(Opcode::Iand, {acc, c3}, "m");
    ValueId m32 = b.op(Opcode::Trunc, {m}, "m32");
    b.br_table(m32, {{"sw4_0", {}}, {"sw4_1", {}}, {"sw4_2", {}}, {"sw4_3", {}}}, "sw4_0");
    for (int k = 0; k < 4; k++) {
      b.begin_block("sw4_" + std::to_string(k));
      ValueId t = operand(k, "t" + std::to_string(k));
      backedge(t, acc);
    }
  } else {
    ValueId c3 = b.iconst(3, "c3");
    ValueId m = b.op(Opcode::Iand, {acc, c3}, "m");
    ValueId lo = b.iconst(0, "lo4");
    ValueId hi = b.iconst(3, "hi4");
    ValueId sel = b.intr(IntrinsicOp::SpecializedValue, {m, lo, hi}, "sel4");
    // target slot pc1 + sel; sel is constant within each arm
    ValueId slot = b.op(Opcode::Iadd, {pc1, sel}, "slot");
    ValueId e = b.iconst(8, "e8s");
    ValueId o = b.op(Opcode::Imul, {slot, e}, "slot_off");
    ValueId a = b.op(Opcode::Iadd, {program, o}, "slot_addr");
    ValueId t = b.op(Opcode::Load64, {a}, "sw4_target");
    b.intr_void(IntrinsicOp::PopContext, {});
    backedge(t, acc);
  }

  b.begin_block("op_bad");
  b.trap("min: bad opcode");

  return b.finish();
}

namespace {

Function build_emit_helper() {
  FnBuilder b("emit");
  ValueId v = b.param("v", ScalarType::I64);
  b.begin_block("entry");
  b.op_void(Opcode::PrintI64, {v});
  b.ret();
  return b.finish();
}

}  // namespace

void install_program(Module& m, const MinProgram& program) {
  uint64_t end = kBytecodeBase + 8 * program.words.size();
  m.memory.size = std::max(m.memory.size, end);
  for (const Segment& seg : m.memory.segments) {
    if (seg.offset < end && seg.offset + seg.bytes.size() > kBytecodeBase) {
      throw std::invalid_argument("module data overlaps the bytecode region");
    }
  }
  if (program.words.empty()) return;
  Segment seg;
  seg.offset = kBytecodeBase;
  seg.bytes.reserve(program.words.size() * 8);
  for (uint64_t w : program.words) {
    for (int i = 0; i < 8; i++) seg.bytes.push_back(uint8_t(w >> (8 * i)));
  }
  m.memory.segments.push_back(std::move(seg));
}

Module build_min_module(
    const MinProgram& program,
    std::span<const std::pair<std::string, InterpreterOptions>> variants) {
  Module m;
  m.memory.size = kBytecodeBase;
  install_program(m, program);
  m.functions.push_back(build_emit_helper());
  for (const auto& [name, opts] : variants) {
    m.functions.push_back(build_min_interpreter(opts, name));
  }
  return m;
}

Module build_min_module(const MinProgram& program) {
  std::vector<std::pair<std::string, InterpreterOptions>> variants = {
      {"min_plain", InterpreterOptions{false, false}},
      {"min_state", InterpreterOptions{true, false}},
  };
  return build_min_module(program, variants);
}

SpecializationRequest make_request(const std::string& target, const MinProgram& program,
                                   const std::string& output) {
  SpecializationRequest req;
  req.target = target;
  req.output_name = output;
  req.arg_modes = {ArgMode::memory(kBytecodeBase, 8 * program.words.size()),
                   ArgMode::runtime()};
  return req;
}

WatchRange bytecode_watch(const MinProgram& program) {
  return WatchRange{"bytecode", kBytecodeBase, 8 * program.words.size()};
}

WatchRange register_watch() {
  return WatchRange{"registers", kRegisterBase, 8 * kRegisterCount};
}

// ---------------------------------------------------------------------
// Benchmarking

std::string BenchReport::format_table() const {
  std::ostringstream os;
  os << "config              insts      loads      stores     bytecode_loads  ratio\n";
  for (const BenchRow& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-19s %-10llu %-10llu %-10llu %-15llu %.2f\n",
                  r.config.c_str(), (unsigned long long)r.insts,
                  (unsigned long long)r.loads, (unsigned long long)r.stores,
                  (unsigned long long)r.bytecode_loads, r.ratio);
    os << buf;
  }
  return os.str();
}

std::string BenchReport::format_csv() const {
  std::ostringstream os;
  os << "config,insts,loads,stores,bytecode_loads,ratio\n";
  for (const BenchRow& r : rows) {
    os << r.config << ',' << r.insts << ',' << r.loads << ',' << r.stores << ','
       << r.bytecode_loads << ',' << r.ratio << '\n';
  }
  return os.str();
}

BenchReport bench(const MinProgram& program, std::span<const std::string> configs,
                  uint64_t input, uint64_t fuel) {
  return bench_on(build_min_module(program), program, configs, input, fuel);
}

BenchReport bench_on(const Module& interpreters, const MinProgram& program,
                     std::span<const std::string> configs, uint64_t input,
                     uint64_t fuel) {
  Module base = interpreters;
  bool installed = false;
  for (const Segment& seg : base.memory.segments) {
    if (seg.offset == kBytecodeBase && seg.bytes.size() == 8 * program.words.size()) {
      installed = true;
    }
  }
  if (!installed) install_program(base, program);
  if (!base.find_function("min_plain") || !base.find_function("min_state")) {
    throw std::invalid_argument("bench module must define @min_plain and @min_state");
  }
  PolyfillResult poly = polyfill_intrinsics(base);

  std::vector<WatchRange> watches = {bytecode_watch(program), register_watch()};
  std::vector<uint64_t> args = {kBytecodeBase, input};

  auto measure = [&](const std::string& config) -> BenchRow {
    BenchRow row;
    row.config = config;
    ExecResult result;
    if (config == "interp-plain") {
      result = run(poly.module, "min_plain", args, watches, fuel);
    } else if (config == "interp-state") {
      result = run(poly.module, "min_state", args, watches, fuel);
    } else if (config == "specialized-plain" || config == "specialized-state") {
      const bool state = config == "specialized-state";
      SpecializationRequest req =
          make_request(state ? "min_state" : "min_plain", program,
                       state ? "min_compiled_state" : "min_compiled");
      Module specialized = specialize(base, req);
      result = run(specialized, req.output_name, args, watches, fuel);
    } else {
      throw std::invalid_argument("unknown bench config '" + config + "'");
    }
    row.insts = result.metrics.insts_executed;
    row.loads = result.metrics.loads;
    row.stores = result.metrics.stores;
    row.bytecode_loads = result.metrics.loads_in_range.at("bytecode");
    return row;
  };

  BenchRow baseline = measure("interp-plain");
  BenchReport report;
  for (const std::string& config : configs) {
    BenchRow row = config == "interp-plain" ? baseline : measure(config);
    row.ratio = row.insts ? double(baseline.insts) / double(row.insts) : 0.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------
// Random program generation (assembler-level, bounded loops)

MinProgram generate_program(uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](uint64_t n) { return rng() % n; };

  std::ostringstream os;
  int label_counter = 0;
  auto fresh_label = [&] { return "L" + std::to_string(label_counter++); };

  // Registers: 2 = constant one, 3 = result accumulator, 4..9 scratch.
  os << "  LOAD_IMMEDIATE 1\n  STORE_REG 2\n";
  os << "  LOAD_IMMEDIATE " << pick(100) << "\n  STORE_REG 3\n";
  int scratch = 4 + int(pick(5));
  for (int r = 4; r <= scratch; r++) {
    os << "  LOAD_IMMEDIATE " << pick(1000) << "\n  STORE_REG " << r << "\n";
  }

  auto body_op = [&] {
    switch (pick(6)) {
      case 0:
        os << "  ADD 3 " << 4 + pick(uint64_t(scratch - 3)) << "\n  STORE_REG 3\n";
        break;
      case 1:
        os << "  SUB 3 " << 4 + pick(uint64_t(scratch - 3)) << "\n  STORE_REG 3\n";
        break;
      case 2:
        os << "  MUL 3 2\n  STORE_REG 3\n";
        break;
      case 3:
        os << "  LOAD_REG " << 4 + pick(uint64_t(scratch - 3)) << "\n  STORE_REG "
           << 4 + pick(uint64_t(scratch - 3)) << "\n";
        break;
      case 4:
        os << "  LOAD_IMMEDIATE " << pick(512) << "\n  STORE_REG "
           << 4 + pick(uint64_t(scratch - 3)) << "\n";
        break;
      case 5:
        os << "  LOAD_REG 3\n  PRINT\n";
        break;
    }
  };

  // Optional branch on the input-seeded accumulator.
  if (pick(2) == 0) {
    std::string nz = fresh_label(), done = fresh_label();
    os << "  JMPNZ " << nz << "\n";
    os << "  LOAD_IMMEDIATE 111\n  PRINT\n";
    os << "  JMP " << done << "\n";
    os << nz << ":\n  LOAD_IMMEDIATE 222\n  PRINT\n";
    os << done << ":\n";
  }

  // One or two bounded counting loops (counter in r1, possibly r5 nested).
  int loops = 1 + int(pick(2));
  for (int l = 0; l < loops; l++) {
    std::string head = fresh_label();
    os << "  LOAD_IMMEDIATE " << 1 + pick(9) << "\n  STORE_REG 1\n";
    os << head << ":\n";
    int ops = 1 + int(pick(3));
    for (int i = 0; i < ops; i++) body_op();
    if (l == 0 && pick(3) == 0) {
      // nested inner loop with its own counter
      std::string inner = fresh_label();
      os << "  LOAD_IMMEDIATE " << 1 + pick(5) << "\n  STORE_REG 5\n";
      os << inner << ":\n";
      body_op();
      os << "  SUB 5 2\n  STORE_REG 5\n  JMPNZ " << inner << "\n";
    }
    os << "  SUB 1 2\n  STORE_REG 1\n  JMPNZ " << head << "\n";
  }

  os << "  LOAD_REG 3\n  PRINT\n  HALT\n";
  return assemble(os.str());
}

}  // namespace peval::minvm
