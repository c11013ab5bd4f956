#include "peval/exec.hpp"

#include <cassert>
#include <cstring>
#include <stdexcept>

namespace peval {

uint64_t eval_scalar(Opcode op, ScalarType type, std::span<const uint64_t> args) {
  const bool w32 = type == ScalarType::I32;
  auto canon = [&](uint64_t v) { return w32 ? (v & 0xffffffffu) : v; };
  auto a = [&](size_t i) { return args[i]; };

  switch (op) {
    case Opcode::Iadd:
      return canon(a(0) + a(1));
    case Opcode::Isub:
      return canon(a(0) - a(1));
    case Opcode::Imul:
      return canon(a(0) * a(1));
    case Opcode::Iand:
      return a(0) & a(1);
    case Opcode::Ior:
      return a(0) | a(1);
    case Opcode::Ixor:
      return a(0) ^ a(1);
    case Opcode::Ishl:
      return canon(a(0) << (a(1) & (w32 ? 31 : 63)));
    case Opcode::IshrU:
      return canon(a(0)) >> (a(1) & (w32 ? 31 : 63));
    case Opcode::IcmpEq:
      return a(0) == a(1) ? 1 : 0;
    case Opcode::IcmpNe:
      return a(0) != a(1) ? 1 : 0;
    case Opcode::IcmpLtU:
      return a(0) < a(1) ? 1 : 0;
    case Opcode::IcmpLtS: {
      if (w32) return int32_t(uint32_t(a(0))) < int32_t(uint32_t(a(1))) ? 1 : 0;
      return int64_t(a(0)) < int64_t(a(1)) ? 1 : 0;
    }
    case Opcode::Select:
      return a(0) != 0 ? a(1) : a(2);
    case Opcode::Zext:
      return a(0) & 0xffffffffu;
    case Opcode::Trunc:
      return a(0) & 0xffffffffu;
    default:
      assert(false && "eval_scalar on non-pure opcode");
      return 0;
  }
}

namespace {

struct Trap {
  std::string message;
};

struct Machine {
  static constexpr int kMaxCallDepth = 8192;

  const Module& m;
  std::vector<uint8_t> memory;
  ExecMetrics metrics;
  std::span<const WatchRange> watches;
  uint64_t fuel;
  int depth = 0;

  void burn(uint64_t n = 1) {
    if (fuel < n) throw Trap{"out of fuel"};
    fuel -= n;
    metrics.insts_executed += n;
  }

  void count_ranges(std::map<std::string, uint64_t> ExecMetrics::* field, uint64_t addr,
                    unsigned size) {
    for (const WatchRange& w : watches) {
      if (addr < w.start + w.len && addr + size > w.start) {
        (metrics.*field)[w.label]++;
      }
    }
  }

  void check_bounds(uint64_t addr, unsigned size) {
    if (addr > memory.size() || memory.size() - addr < size) {
      throw Trap{"out-of-bounds memory access at " + std::to_string(addr)};
    }
  }

  uint64_t load(uint64_t addr, unsigned size) {
    check_bounds(addr, size);
    metrics.loads++;
    count_ranges(&ExecMetrics::loads_in_range, addr, size);
    uint64_t v = 0;
    std::memcpy(&v, memory.data() + addr, size);
    return v;
  }

  void store(uint64_t addr, unsigned size, uint64_t value) {
    check_bounds(addr, size);
    metrics.stores++;
    count_ranges(&ExecMetrics::stores_in_range, addr, size);
    std::memcpy(memory.data() + addr, &value, size);
  }

  // Executes one function activation; returns the value of `return %v`
  // (0 for void returns).
  uint64_t call(const Function& f, std::span<const uint64_t> args) {
    if (++depth > kMaxCallDepth) throw Trap{"call stack overflow"};
    std::vector<uint64_t> vals(f.values.size(), 0);
    for (size_t i = 0; i < args.size(); i++) vals[f.params[i]] = args[i];

    uint32_t block = 0;
    for (;;) {
      const Block& b = f.blocks[block];
      for (const Instruction& inst : b.insts) {
        burn();
        switch (inst.op) {
          case Opcode::ConstI64:
            vals[inst.result] = inst.imm;
            break;
          case Opcode::ConstI32:
            vals[inst.result] = inst.imm & 0xffffffffu;
            break;
          case Opcode::Load8U:
            vals[inst.result] = load(vals[inst.args[0]], 1);
            break;
          case Opcode::Load32:
            vals[inst.result] = load(vals[inst.args[0]], 4);
            break;
          case Opcode::Load64:
            vals[inst.result] = load(vals[inst.args[0]], 8);
            break;
          case Opcode::Store8:
            store(vals[inst.args[0]], 1, vals[inst.args[1]]);
            break;
          case Opcode::Store32:
            store(vals[inst.args[0]], 4, vals[inst.args[1]]);
            break;
          case Opcode::Store64:
            store(vals[inst.args[0]], 8, vals[inst.args[1]]);
            break;
          case Opcode::PrintI64:
            metrics.prints.push_back(vals[inst.args[0]]);
            break;
          case Opcode::Call: {
            const Function* callee = m.find_function(inst.callee);
            if (!callee) throw Trap{"call to unknown function @" + inst.callee};
            std::vector<uint64_t> cargs;
            cargs.reserve(inst.args.size());
            for (ValueId a : inst.args) cargs.push_back(vals[a]);
            uint64_t r = call(*callee, cargs);
            if (inst.result != kNoValue) vals[inst.result] = r;
            break;
          }
          case Opcode::Intrinsic:
            throw Trap{"raw intrinsic." +
                       std::string(intrinsic_info(inst.intrinsic).name) +
                       " (polyfill before executing)"};
          default: {
            uint64_t a[3] = {0, 0, 0};
            for (size_t i = 0; i < inst.args.size(); i++) a[i] = vals[inst.args[i]];
            vals[inst.result] = eval_scalar(inst.op, operand_type(f, inst),
                                            std::span<const uint64_t>(a, inst.args.size()));
            break;
          }
        }
      }

      const Terminator& t = b.term;
      burn();
      metrics.branches++;
      auto take = [&](const Edge& e) {
        const Block& target = f.blocks[e.target];
        // Edge args overwrite target block params; read args first so a
        // self-edge passing permuted params stays correct.
        std::vector<uint64_t> tmp(e.args.size());
        for (size_t i = 0; i < e.args.size(); i++) tmp[i] = vals[e.args[i]];
        for (size_t i = 0; i < e.args.size(); i++) vals[target.params[i]] = tmp[i];
        block = e.target;
      };
      switch (t.kind) {
        case TermKind::Br:
          take(t.edges[0]);
          break;
        case TermKind::BrIf:
          take(vals[t.value] != 0 ? t.edges[0] : t.edges[1]);
          break;
        case TermKind::BrTable: {
          uint64_t sel = vals[t.value];
          size_t n = t.edges.size() - 1;
          take(sel < n ? t.edges[size_t(sel)] : t.edges[n]);
          break;
        }
        case TermKind::Return:
          depth--;
          return t.value != kNoValue ? vals[t.value] : 0;
        case TermKind::Trap:
          throw Trap{t.message};
      }
    }
  }
};

}  // namespace

ExecResult run(const Module& m, std::string_view func, std::span<const uint64_t> args,
               std::span<const WatchRange> watches, uint64_t fuel) {
  const Function* f = m.find_function(func);
  if (!f) throw std::invalid_argument("run: no function named " + std::string(func));
  if (args.size() != f->params.size()) {
    throw std::invalid_argument("run: @" + std::string(func) + " takes " +
                                std::to_string(f->params.size()) + " args, got " +
                                std::to_string(args.size()));
  }

  Machine machine{m, m.memory.flatten(), {}, watches, fuel};
  for (const WatchRange& w : watches) {
    machine.metrics.loads_in_range[w.label] = 0;
    machine.metrics.stores_in_range[w.label] = 0;
  }

  ExecResult result;
  try {
    uint64_t v = machine.call(*f, args);
    result.value = v;
    result.has_value = f->result.has_value();
  } catch (const Trap& trap) {
    result.trapped = true;
    result.trap_message = trap.message;
  }
  result.metrics = std::move(machine.metrics);
  result.final_memory = std::move(machine.memory);
  return result;
}

}  // namespace peval
