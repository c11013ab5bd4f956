#include "peval/validate.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "peval/cfg.hpp"

namespace peval {

std::string Diagnostic::format() const {
  std::string out;
  if (!function.empty()) out += "func @" + function;
  if (!block.empty()) out += ", block ^" + block;
  if (!out.empty()) out += ": ";
  return out + message;
}

std::string format_diagnostics(const std::vector<Diagnostic>& diags) {
  std::string out;
  for (const Diagnostic& d : diags) {
    out += d.format();
    out += '\n';
  }
  return out;
}

namespace {

struct Validator {
  const Module& m;
  std::vector<Diagnostic>& diags;

  void module_error(const std::string& msg) { diags.push_back({"", "", msg}); }
  void error(const Function& f, const std::string& msg) {
    diags.push_back({f.name, "", msg});
  }
  void error(const Function& f, const Block& b, const std::string& msg) {
    diags.push_back({f.name, b.label, msg});
  }

  void check_memory() {
    std::vector<std::pair<uint64_t, uint64_t>> spans;
    for (const Segment& seg : m.memory.segments) {
      uint64_t end = seg.offset + seg.bytes.size();
      if (end < seg.offset || end > m.memory.size) {
        module_error("data segment at " + std::to_string(seg.offset) +
                     " exceeds memory size " + std::to_string(m.memory.size));
        continue;
      }
      spans.emplace_back(seg.offset, end);
    }
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); i++) {
      if (spans[i].first < spans[i - 1].second) {
        module_error("overlapping data segments at " + std::to_string(spans[i].first));
      }
    }
  }

  bool check_value_id(const Function& f, const Block& b, ValueId v) {
    if (v == kNoValue || v >= f.values.size()) {
      error(f, b, "reference to out-of-range value id");
      return false;
    }
    return true;
  }

  void check_args_typed(const Function& f, const Block& b, const Instruction& inst,
                        size_t inst_index) {
    auto mismatch = [&](const std::string& what) {
      error(f, b, "inst #" + std::to_string(inst_index) + " (" +
                      std::string(opcode_info(inst.op).name) + "): " + what);
    };
    auto type_of = [&](ValueId v) { return f.value_type(v); };

    switch (inst.op) {
      case Opcode::Iadd:
      case Opcode::Isub:
      case Opcode::Imul:
      case Opcode::Iand:
      case Opcode::Ior:
      case Opcode::Ixor:
      case Opcode::Ishl:
      case Opcode::IshrU:
      case Opcode::IcmpEq:
      case Opcode::IcmpNe:
      case Opcode::IcmpLtU:
      case Opcode::IcmpLtS:
        if (type_of(inst.args[0]) != type_of(inst.args[1]))
          mismatch("operand types differ");
        break;
      case Opcode::Select:
        if (type_of(inst.args[0]) != ScalarType::I32) mismatch("condition must be i32");
        if (type_of(inst.args[1]) != type_of(inst.args[2]))
          mismatch("select arms have different types");
        break;
      case Opcode::Zext:
        if (type_of(inst.args[0]) != ScalarType::I32) mismatch("zext takes i32");
        break;
      case Opcode::Trunc:
        if (type_of(inst.args[0]) != ScalarType::I64) mismatch("trunc takes i64");
        break;
      case Opcode::Load8U:
      case Opcode::Load32:
      case Opcode::Load64:
        if (type_of(inst.args[0]) != ScalarType::I64) mismatch("address must be i64");
        break;
      case Opcode::Store8:
      case Opcode::Store64:
        if (type_of(inst.args[0]) != ScalarType::I64) mismatch("address must be i64");
        if (type_of(inst.args[1]) != ScalarType::I64) mismatch("value must be i64");
        break;
      case Opcode::Store32:
        if (type_of(inst.args[0]) != ScalarType::I64) mismatch("address must be i64");
        if (type_of(inst.args[1]) != ScalarType::I32) mismatch("value must be i32");
        break;
      case Opcode::PrintI64:
        if (type_of(inst.args[0]) != ScalarType::I64) mismatch("print.i64 takes i64");
        break;
      case Opcode::Intrinsic:
        for (ValueId a : inst.args) {
          if (type_of(a) != ScalarType::I64) {
            mismatch("intrinsic arguments must be i64");
            break;
          }
        }
        break;
      case Opcode::Call: {
        const Function* callee = m.find_function(inst.callee);
        if (!callee) {
          mismatch("call to unknown function @" + inst.callee);
          break;
        }
        if (callee->params.size() != inst.args.size()) {
          mismatch("call argument count mismatch for @" + inst.callee);
          break;
        }
        for (size_t i = 0; i < inst.args.size(); i++) {
          if (type_of(inst.args[i]) != callee->value_type(callee->params[i])) {
            mismatch("call argument " + std::to_string(i) + " type mismatch");
          }
        }
        if (inst.result != kNoValue && !callee->result) {
          mismatch("call result from void function @" + inst.callee);
        }
        break;
      }
      default:
        break;
    }

    if (inst.op == Opcode::ConstI32 && (inst.imm >> 32) != 0) {
      mismatch("const.i32 payload exceeds 32 bits");
    }

    // Result type agrees with opcode rule.
    if (inst.result != kNoValue && inst.op != Opcode::Call) {
      auto rt = result_type(f, inst);
      if (rt && f.value_type(inst.result) != *rt) {
        mismatch("result type does not match opcode");
      }
    }
    if (inst.result != kNoValue && inst.op == Opcode::Call) {
      const Function* callee = m.find_function(inst.callee);
      if (callee && callee->result && f.value_type(inst.result) != *callee->result) {
        mismatch("call result type mismatch");
      }
    }
  }

  void check_function(const Function& f) {
    if (f.blocks.empty()) {
      error(f, "function has no blocks");
      return;
    }
    if (!f.blocks[0].params.empty()) {
      error(f, f.blocks[0], "entry block must not take parameters");
    }

    std::set<std::string> labels;
    for (const Block& b : f.blocks) {
      if (!labels.insert(b.label).second) {
        error(f, b, "duplicate block label");
      }
    }

    // Single definition per value.
    std::vector<int> def_count(f.values.size(), 0);
    for (ValueId p : f.params) def_count[p]++;
    for (const Block& b : f.blocks) {
      for (ValueId p : b.params) def_count[p]++;
      for (const Instruction& inst : b.insts) {
        if (inst.result != kNoValue) def_count[inst.result]++;
      }
    }
    for (size_t v = 0; v < f.values.size(); v++) {
      if (def_count[v] > 1) {
        error(f, "value %" + f.values[v].name + " defined " +
                     std::to_string(def_count[v]) + " times");
      }
    }

    // Arity and types per instruction.
    for (const Block& b : f.blocks) {
      for (size_t i = 0; i < b.insts.size(); i++) {
        const Instruction& inst = b.insts[i];
        const OpcodeInfo& info = opcode_info(inst.op);
        bool ok = true;
        for (ValueId a : inst.args) ok &= check_value_id(f, b, a);
        if (!ok) continue;
        if (inst.op == Opcode::Intrinsic) {
          const IntrinsicInfo& ii = intrinsic_info(inst.intrinsic);
          if (int(inst.args.size()) != ii.num_args) {
            error(f, b, "intrinsic." + std::string(ii.name) + " expects " +
                            std::to_string(ii.num_args) + " args");
            continue;
          }
          if (ii.has_result != (inst.result != kNoValue)) {
            error(f, b, "intrinsic." + std::string(ii.name) +
                            (ii.has_result ? " requires a result" : " has no result"));
            continue;
          }
        } else if (info.num_args >= 0 && int(inst.args.size()) != info.num_args) {
          error(f, b, std::string(info.name) + " expects " +
                          std::to_string(info.num_args) + " args");
          continue;
        }
        if (inst.op != Opcode::Call && inst.op != Opcode::Intrinsic) {
          if (info.has_result != (inst.result != kNoValue)) {
            error(f, b, std::string(info.name) +
                            (info.has_result ? " requires a result" : " has no result"));
            continue;
          }
        }
        check_args_typed(f, b, inst, i);
      }

      // Terminator shape.
      const Terminator& t = b.term;
      switch (t.kind) {
        case TermKind::Br:
          if (t.edges.size() != 1) error(f, b, "br needs exactly one edge");
          break;
        case TermKind::BrIf:
          if (t.edges.size() != 2) error(f, b, "br_if needs two edges");
          if (t.value == kNoValue || t.value >= f.values.size()) {
            error(f, b, "br_if condition missing");
          } else if (f.value_type(t.value) != ScalarType::I32) {
            error(f, b, "br_if condition must be i32");
          }
          break;
        case TermKind::BrTable:
          if (t.edges.empty()) error(f, b, "br_table needs a default edge");
          if (t.value == kNoValue || t.value >= f.values.size()) {
            error(f, b, "br_table selector missing");
          } else if (f.value_type(t.value) != ScalarType::I32) {
            error(f, b, "br_table selector must be i32");
          }
          break;
        case TermKind::Return:
          if (t.value != kNoValue) {
            if (!f.result) {
              error(f, b, "return with value from void function");
            } else if (t.value < f.values.size() &&
                       f.value_type(t.value) != *f.result) {
              error(f, b, "return value type mismatch");
            }
          } else if (f.result) {
            error(f, b, "return without value from non-void function");
          }
          break;
        case TermKind::Trap:
          break;
      }
      for (const Edge& e : t.edges) {
        if (e.target >= f.blocks.size()) {
          error(f, b, "edge to out-of-range block");
          continue;
        }
        const Block& target = f.blocks[e.target];
        if (e.args.size() != target.params.size()) {
          error(f, b, "edge to ^" + target.label + " passes " +
                          std::to_string(e.args.size()) + " args, block takes " +
                          std::to_string(target.params.size()));
          continue;
        }
        for (size_t i = 0; i < e.args.size(); i++) {
          if (e.args[i] >= f.values.size()) {
            error(f, b, "edge argument out of range");
          } else if (f.value_type(e.args[i]) != f.value_type(target.params[i])) {
            error(f, b, "edge arg " + std::to_string(i) + " to ^" + target.label +
                            " has wrong type");
          }
        }
      }
    }

    check_dominance(f);
  }

  // Def-dominates-use over reachable blocks. Defs: function params dominate
  // everything; block params and instruction results dominate later uses in
  // their block and all dominated blocks. Edge args are uses at block end.
  void check_dominance(const Function& f) {
    auto succs = block_successors(f);
    for (auto& edges : succs) {
      for (uint32_t t : edges) {
        if (t >= f.blocks.size()) return;  // already diagnosed
      }
    }
    Dominators dom(succs);

    // def site per value: block index, position (params = -1)
    struct DefSite {
      uint32_t block = kNoBlock;
      int pos = 0;
      bool is_function_param = false;
    };
    std::vector<DefSite> defs(f.values.size());
    for (ValueId p : f.params) defs[p] = {0, -1, true};
    for (uint32_t bi = 0; bi < f.blocks.size(); bi++) {
      const Block& b = f.blocks[bi];
      for (ValueId p : b.params) {
        if (!defs[p].is_function_param && defs[p].block == kNoBlock)
          defs[p] = {bi, -1, false};
      }
      for (size_t i = 0; i < b.insts.size(); i++) {
        ValueId r = b.insts[i].result;
        if (r != kNoValue && r < f.values.size() && !defs[r].is_function_param &&
            defs[r].block == kNoBlock) {
          defs[r] = {bi, int(i), false};
        }
      }
    }

    auto check_use = [&](uint32_t bi, int pos, ValueId v) {
      if (v == kNoValue || v >= f.values.size()) return;
      const DefSite& d = defs[v];
      if (d.is_function_param) return;
      const Block& b = f.blocks[bi];
      if (d.block == kNoBlock) {
        error(f, b, "use of undefined value %" + f.values[v].name);
        return;
      }
      if (!dom.reachable(bi)) return;  // unreachable code never executes
      if (d.block == bi) {
        if (d.pos >= pos && pos >= 0) {
          error(f, b, "%" + f.values[v].name + " used before its definition");
        }
        return;
      }
      if (!dom.dominates(d.block, bi)) {
        error(f, b, "use of %" + f.values[v].name + " not dominated by its definition in ^" +
                        f.blocks[d.block].label);
      }
    };

    for (uint32_t bi = 0; bi < f.blocks.size(); bi++) {
      const Block& b = f.blocks[bi];
      for (size_t i = 0; i < b.insts.size(); i++) {
        for (ValueId a : b.insts[i].args) check_use(bi, int(i), a);
      }
      int end = int(b.insts.size());
      if (b.term.value != kNoValue) check_use(bi, end, b.term.value);
      for (const Edge& e : b.term.edges) {
        for (ValueId a : e.args) check_use(bi, end, a);
      }
    }
  }

  void run() {
    std::set<std::string> names;
    for (const Function& f : m.functions) {
      if (!names.insert(f.name).second) {
        module_error("duplicate function @" + f.name);
      }
    }
    if (!m.entry.empty() && !m.find_function(m.entry)) {
      module_error("entry function @" + m.entry + " not found");
    }
    check_memory();
    for (const Function& f : m.functions) check_function(f);
  }
};

}  // namespace

std::vector<Diagnostic> validate(const Module& m) {
  std::vector<Diagnostic> diags;
  Validator{m, diags}.run();
  return diags;
}

}  // namespace peval
