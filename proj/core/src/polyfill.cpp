#include <map>

#include "peval/specialize.hpp"

namespace peval {

namespace {

bool uses_register_intrinsics(const Function& f) {
  for (const Block& b : f.blocks) {
    for (const Instruction& inst : b.insts) {
      if (inst.op == Opcode::Intrinsic && (inst.intrinsic == IntrinsicOp::LoadRegister ||
                                           inst.intrinsic == IntrinsicOp::StoreRegister)) {
        return true;
      }
    }
  }
  return false;
}

}  // namespace

Function polyfill_function(const Function& f, uint64_t scratch_base) {
  Function out = f;

  // specialized_value results become aliases of their value operand.
  std::map<ValueId, ValueId> subst;
  for (const Block& b : out.blocks) {
    for (const Instruction& inst : b.insts) {
      if (inst.op == Opcode::Intrinsic && inst.intrinsic == IntrinsicOp::SpecializedValue) {
        subst[inst.result] = inst.args[0];
      }
    }
  }
  auto resolve = [&](ValueId v) {
    while (true) {
      auto it = subst.find(v);
      if (it == subst.end()) return v;
      v = it->second;
    }
  };

  int fresh_counter = 0;
  auto fresh = [&](ScalarType t) {
    out.values.push_back(ValueInfo{"pf" + std::to_string(fresh_counter++), t});
    return ValueId(out.values.size() - 1);
  };

  for (Block& b : out.blocks) {
    std::vector<Instruction> insts;
    insts.reserve(b.insts.size());

    // regs live at scratch_base + 8 * (index & 255)
    auto register_addr = [&](std::vector<Instruction>& sink, ValueId index) {
      ValueId mask = fresh(ScalarType::I64);
      sink.push_back({mask, Opcode::ConstI64, {}, 255});
      ValueId masked = fresh(ScalarType::I64);
      sink.push_back({masked, Opcode::Iand, {index, mask}});
      ValueId eight = fresh(ScalarType::I64);
      sink.push_back({eight, Opcode::ConstI64, {}, 8});
      ValueId scaled = fresh(ScalarType::I64);
      sink.push_back({scaled, Opcode::Imul, {masked, eight}});
      ValueId base = fresh(ScalarType::I64);
      sink.push_back({base, Opcode::ConstI64, {}, scratch_base});
      ValueId addr = fresh(ScalarType::I64);
      sink.push_back({addr, Opcode::Iadd, {scaled, base}});
      return addr;
    };

    for (Instruction inst : b.insts) {
      for (ValueId& a : inst.args) a = resolve(a);
      if (inst.op != Opcode::Intrinsic) {
        insts.push_back(std::move(inst));
        continue;
      }
      switch (inst.intrinsic) {
        case IntrinsicOp::PushContext:
        case IntrinsicOp::UpdateContext:
        case IntrinsicOp::PopContext:
        case IntrinsicOp::AssertConst:
        case IntrinsicOp::Flush:
        case IntrinsicOp::SpecializedValue:
          break;  // dropped
        case IntrinsicOp::LoadRegister: {
          ValueId addr = register_addr(insts, inst.args[0]);
          insts.push_back({inst.result, Opcode::Load64, {addr}});
          break;
        }
        case IntrinsicOp::StoreRegister: {
          ValueId addr = register_addr(insts, inst.args[0]);
          insts.push_back({kNoValue, Opcode::Store64, {addr, inst.args[1]}});
          break;
        }
        case IntrinsicOp::LocalRead:  // (index, addr)
          insts.push_back({inst.result, Opcode::Load64, {inst.args[1]}});
          break;
        case IntrinsicOp::LocalWrite:  // (index, addr, value)
          insts.push_back({kNoValue, Opcode::Store64, {inst.args[1], inst.args[2]}});
          break;
        case IntrinsicOp::StackPush:  // (addr, value)
          insts.push_back({kNoValue, Opcode::Store64, {inst.args[0], inst.args[1]}});
          break;
        case IntrinsicOp::StackPop:  // (addr)
        case IntrinsicOp::StackRead:  // (depth, addr)
          insts.push_back({inst.result,
                           Opcode::Load64,
                           {inst.intrinsic == IntrinsicOp::StackPop ? inst.args[0]
                                                                    : inst.args[1]}});
          break;
        case IntrinsicOp::StackWrite:  // (depth, addr, value)
          insts.push_back({kNoValue, Opcode::Store64, {inst.args[1], inst.args[2]}});
          break;
      }
    }
    b.insts = std::move(insts);

    if (b.term.value != kNoValue) b.term.value = resolve(b.term.value);
    for (Edge& e : b.term.edges) {
      for (ValueId& a : e.args) a = resolve(a);
    }
  }
  return out;
}

PolyfillResult polyfill_intrinsics(const Module& m) {
  PolyfillResult result;
  result.module = m;
  for (Function& f : result.module.functions) {
    uint64_t base = 0;
    if (uses_register_intrinsics(f)) {
      base = (result.module.memory.size + 7) & ~uint64_t(7);
      result.module.memory.size = base + 8 * 256;
      result.scratch_regions.emplace_back(f.name, ConstRange{base, 8 * 256});
    }
    f = polyfill_function(f, base);
  }
  return result;
}

}  // namespace peval
