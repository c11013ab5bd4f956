// The specialization transform.
//
// The algorithm is worklist-driven: generic blocks are specialized per
// *context* (a stack of compile-time constants maintained by the context
// intrinsics), with constant propagation, constant folding and branch
// folding applied while transcribing instructions. A mapping from
// (context, block, offset) to specialized blocks keys the duplication;
// revisits triggered by weakened entry states clear and rebuild the block.
//
// Value references inside blocks under construction are symbolic: every
// operand is a *key* (a generic SSA value, a synthesized value, or a shadow
// cell for virtualized register/local/stack state). A final renaming pass
// over the dominator tree of the specialized CFG resolves keys to concrete
// SSA values, inserting block parameters where SSA repair demands them:
// either at every block (naive mode) or at HSCA cut points plus the
// iterated dominance frontier of multiply-defined keys (hsca mode).
#include "peval/specialize.hpp"

#include <algorithm>
#include <cassert>
#include <deque>
#include <map>
#include <set>

#include "peval/cfg.hpp"
#include "peval/exec.hpp"

namespace peval {

namespace {

// ---------------------------------------------------------------------
// Symbolic keys

struct GKey {
  enum class Kind : uint8_t { Value, Synth, Reg, LocalVal, StackVal };

  Kind kind = Kind::Value;
  uint64_t index = 0;

  static GKey value(ValueId v) { return {Kind::Value, v}; }
  static GKey synth(uint64_t n) { return {Kind::Synth, n}; }
  static GKey reg(uint64_t i) { return {Kind::Reg, i & 255}; }
  static GKey local(uint64_t i) { return {Kind::LocalVal, i}; }
  static GKey stack_slot(uint64_t pos) { return {Kind::StackVal, pos}; }

  friend bool operator==(const GKey&, const GKey&) = default;
  friend auto operator<=>(const GKey&, const GKey&) = default;
};

// ---------------------------------------------------------------------
// Block content under construction

struct SInst {
  bool has_result = false;
  GKey result;
  ScalarType rtype = ScalarType::I64;
  Opcode op = Opcode::ConstI64;
  std::vector<GKey> args;
  uint64_t imm = 0;
  std::string callee;
};

struct Item {
  enum class Kind : uint8_t { Inst, Alias };

  Kind kind = Kind::Inst;
  SInst inst;
  GKey alias_dst, alias_src;  // Alias: dst refers to src's value at this point
};

struct SEdge {
  uint32_t target = 0;
  std::vector<GKey> args;
};

struct STerm {
  TermKind kind = TermKind::Trap;
  bool has_value = false;
  GKey value;
  std::vector<SEdge> edges;
  std::string message;
};

struct LocalCacheEntry {
  GKey addr;
  bool dirty = false;

  friend bool operator==(const LocalCacheEntry&, const LocalCacheEntry&) = default;
};

struct VirtState {
  std::map<uint64_t, LocalCacheEntry> locals;
  std::vector<GKey> stack_addrs;  // index 0 = bottom of stack
  bool stack_valid = true;
};

using AbsEnv = std::map<GKey, AbstractValue>;  // Const entries only

enum class Origin : uint8_t { Prologue, Normal, Arm, Dispatch, TrapStub, EdgeFlush };

struct SpecBlock {
  Origin origin = Origin::Normal;
  uint32_t ctx = 0;
  uint32_t gblock = 0;
  uint32_t offset = 0;

  std::vector<std::pair<GKey, ScalarType>> params;      // generic block params
  std::vector<std::pair<GKey, uint64_t>> pre_defs;      // Arm: constant seeds
  std::vector<Item> items;
  STerm term;

  AbsEnv entry_abs;
  VirtState entry_virt;
  bool has_edges = false;

  VirtState exit_virt;
  uint64_t rebuilds = 0;
  bool in_worklist = false;
};

struct BlockKey {
  uint32_t ctx, gblock, offset;
  friend auto operator<=>(const BlockKey&, const BlockKey&) = default;
};

// ---------------------------------------------------------------------

class Specializer {
 public:
  Specializer(const Module& m, const SpecializationRequest& req,
              const SpecializeOptions& opts)
      : m_(m), req_(req), opts_(opts), target_(*m.find_function(req.target)) {}

  Function run(SpecializeStats* stats);

 private:
  const Module& m_;
  const SpecializationRequest& req_;
  const SpecializeOptions& opts_;
  const Function& target_;

  ConstRanges ranges_;
  std::vector<SpecBlock> blocks_;
  std::map<BlockKey, uint32_t> blockmap_;
  std::map<std::pair<uint32_t, uint32_t>, std::pair<uint32_t, uint32_t>> split_blocks_;
  std::deque<uint32_t> worklist_;
  std::vector<std::vector<uint64_t>> contexts_;
  std::map<std::vector<uint64_t>, uint32_t> context_ids_;
  uint64_t synth_counter_ = 0;
  uint64_t total_rebuilds_ = 0;
  std::map<GKey, ScalarType> synth_types_;
  std::set<ValueId> param_values_;  // target function params: globally visible

  // ---- errors ----------------------------------------------------------

  [[noreturn]] void fail(SpecializeError::Kind kind, const std::string& loc,
                         const std::string& msg) {
    throw SpecializeError(kind, loc, msg);
  }

  std::string loc(uint32_t gblock, size_t inst_index) const {
    return "func @" + target_.name + ", block ^" + target_.blocks[gblock].label +
           ", inst #" + std::to_string(inst_index);
  }

  // ---- contexts ---------------------------------------------------------

  uint32_t intern_context(std::vector<uint64_t> ctx) {
    auto it = context_ids_.find(ctx);
    if (it != context_ids_.end()) return it->second;
    if (contexts_.size() >= opts_.max_contexts) {
      fail(SpecializeError::Kind::ContextCeiling, "",
           "context ceiling of " + std::to_string(opts_.max_contexts) + " exceeded");
    }
    uint32_t id = uint32_t(contexts_.size());
    contexts_.push_back(ctx);
    context_ids_.emplace(std::move(ctx), id);
    return id;
  }

  // ---- types ------------------------------------------------------------

  ScalarType type_of(const GKey& k) const {
    switch (k.kind) {
      case GKey::Kind::Value:
        return target_.value_type(ValueId(k.index));
      case GKey::Kind::Synth: {
        auto it = synth_types_.find(k);
        return it == synth_types_.end() ? ScalarType::I64 : it->second;
      }
      default:
        return ScalarType::I64;
    }
  }

  // ---- block creation ----------------------------------------------------

  uint32_t new_block(Origin origin, uint32_t ctx, uint32_t gblock, uint32_t offset) {
    SpecBlock sb;
    sb.origin = origin;
    sb.ctx = ctx;
    sb.gblock = gblock;
    sb.offset = offset;
    if (origin == Origin::Normal && offset == 0) {
      for (ValueId p : target_.blocks[gblock].params) {
        sb.params.emplace_back(GKey::value(p), target_.value_type(p));
      }
    }
    blocks_.push_back(std::move(sb));
    return uint32_t(blocks_.size() - 1);
  }

  void enqueue(uint32_t sbi) {
    if (!blocks_[sbi].in_worklist) {
      blocks_[sbi].in_worklist = true;
      worklist_.push_back(sbi);
    }
  }

  // Meets the caller's flow state into the entry state of (ctx, gblock,
  // offset), creating the block on first sight, and enqueues it when newly
  // created or weakened. `param_args` carries edge args for the target's
  // generic block params (offset-0 blocks only).
  uint32_t evaluate_target(uint32_t ctx, uint32_t gblock, uint32_t offset,
                           std::span<const GKey> param_args, const AbsEnv& abs,
                           const VirtState& virt,
                           const std::pair<GKey, uint64_t>* arm_seed = nullptr) {
    BlockKey key{ctx, gblock, offset};
    auto [it, created] = blockmap_.try_emplace(key, 0);
    if (created) {
      it->second = new_block(offset == 0 ? Origin::Normal : Origin::Arm, ctx, gblock, offset);
      if (arm_seed) blocks_[it->second].pre_defs.push_back(*arm_seed);
    }
    uint32_t sbi = it->second;
    SpecBlock& sb = blocks_[sbi];

    AbsEnv incoming = abs;
    for (size_t i = 0; i < sb.params.size(); i++) {
      AbstractValue av = abs_lookup(abs, param_args[i]);
      if (av.is_const()) {
        incoming[sb.params[i].first] = av;
      } else {
        incoming.erase(sb.params[i].first);
      }
    }

    bool changed = false;
    if (!sb.has_edges) {
      sb.entry_abs = std::move(incoming);
      sb.entry_virt = virt;
      sb.has_edges = true;
      changed = true;
    } else {
      for (auto eit = sb.entry_abs.begin(); eit != sb.entry_abs.end();) {
        auto iit = incoming.find(eit->first);
        if (iit == incoming.end() || !(iit->second == eit->second)) {
          eit = sb.entry_abs.erase(eit);
          changed = true;
        } else {
          ++eit;
        }
      }
      // locals: keep only entries agreeing in address and dirtiness
      for (auto lit = sb.entry_virt.locals.begin(); lit != sb.entry_virt.locals.end();) {
        auto iit = virt.locals.find(lit->first);
        if (iit == virt.locals.end() || !(iit->second == lit->second)) {
          lit = sb.entry_virt.locals.erase(lit);
          changed = true;
        } else {
          ++lit;
        }
      }
      // stack: depths and addresses must agree, else invalidate
      if (sb.entry_virt.stack_valid) {
        bool agree = virt.stack_valid &&
                     virt.stack_addrs.size() == sb.entry_virt.stack_addrs.size() &&
                     std::equal(virt.stack_addrs.begin(), virt.stack_addrs.end(),
                                sb.entry_virt.stack_addrs.begin());
        if (!agree) {
          sb.entry_virt.stack_addrs.clear();
          sb.entry_virt.stack_valid = false;
          changed = true;
        }
      }
    }

    if (created || changed) enqueue(sbi);
    return sbi;
  }

  // ---- build ------------------------------------------------------------

  static AbstractValue abs_lookup(const AbsEnv& abs, const GKey& k) {
    auto it = abs.find(k);
    return it == abs.end() ? AbstractValue::unknown() : it->second;
  }

  struct BuildState {
    std::vector<Item> items;
    STerm term;
    AbsEnv abs;
    VirtState virt;
    std::vector<uint64_t> ctx;
    bool terminated = false;
  };

  GKey fresh_synth(ScalarType t) {
    GKey k = GKey::synth(synth_counter_++);
    synth_types_[k] = t;
    return k;
  }

  void emit_const(BuildState& bs, const GKey& result, ScalarType t, uint64_t v) {
    Item item;
    item.kind = Item::Kind::Inst;
    item.inst.has_result = true;
    item.inst.result = result;
    item.inst.rtype = t;
    item.inst.op = t == ScalarType::I32 ? Opcode::ConstI32 : Opcode::ConstI64;
    item.inst.imm = t == ScalarType::I32 ? (v & 0xffffffffu) : v;
    bs.items.push_back(std::move(item));
    bs.abs[result] = AbstractValue::constant(t, v);
  }

  void emit_alias(BuildState& bs, const GKey& dst, const GKey& src) {
    Item item;
    item.kind = Item::Kind::Alias;
    item.alias_dst = dst;
    item.alias_src = src;
    bs.items.push_back(std::move(item));
    AbstractValue av = abs_lookup(bs.abs, src);
    if (av.is_const()) {
      bs.abs[dst] = av;
    } else {
      bs.abs.erase(dst);
    }
  }

  // Clones or folds one generic data instruction.
  void transcribe(BuildState& bs, const Instruction& gi) {
    std::vector<AbstractValue> arg_abs;
    arg_abs.reserve(gi.args.size());
    std::vector<GKey> arg_keys;
    arg_keys.reserve(gi.args.size());
    for (ValueId a : gi.args) {
      GKey k = GKey::value(a);
      arg_keys.push_back(k);
      arg_abs.push_back(abs_lookup(bs.abs, k));
    }

    AbstractValue out = transfer(gi.op, operand_type(target_, gi), arg_abs, ranges_,
                                 m_.memory, gi.imm);

    bool foldable = gi.result != kNoValue && out.is_const() &&
                    gi.op != Opcode::Call && gi.op != Opcode::Intrinsic;
    if (foldable) {
      emit_const(bs, GKey::value(gi.result), out.type, out.value);
      return;
    }

    Item item;
    item.kind = Item::Kind::Inst;
    item.inst.op = gi.op;
    item.inst.args = std::move(arg_keys);
    item.inst.imm = gi.imm;
    item.inst.callee = gi.callee;
    if (gi.result != kNoValue) {
      item.inst.has_result = true;
      item.inst.result = GKey::value(gi.result);
      if (gi.op == Opcode::Call) {
        const Function* callee = m_.find_function(gi.callee);
        item.inst.rtype = callee && callee->result ? *callee->result : ScalarType::I64;
      } else {
        item.inst.rtype = result_type(target_, gi).value_or(ScalarType::I64);
      }
      bs.abs.erase(item.inst.result);
    }
    bs.items.push_back(std::move(item));
  }

  // Emits a plain 64-bit load (used by state intrinsics falling back to
  // memory); folds through constant ranges like any other load.
  void emit_load64(BuildState& bs, const GKey& result, const GKey& addr) {
    AbstractValue addr_abs = abs_lookup(bs.abs, addr);
    AbstractValue out = transfer(Opcode::Load64, ScalarType::I64, {&addr_abs, 1}, ranges_,
                                 m_.memory);
    if (out.is_const()) {
      emit_const(bs, result, out.type, out.value);
      return;
    }
    Item item;
    item.kind = Item::Kind::Inst;
    item.inst.has_result = true;
    item.inst.result = result;
    item.inst.rtype = ScalarType::I64;
    item.inst.op = Opcode::Load64;
    item.inst.args = {addr};
    bs.items.push_back(std::move(item));
    bs.abs.erase(result);
  }

  void emit_store64(BuildState& bs, const GKey& addr, const GKey& value) {
    Item item;
    item.kind = Item::Kind::Inst;
    item.inst.op = Opcode::Store64;
    item.inst.args = {addr, value};
    bs.items.push_back(std::move(item));
  }

  void flush_state(BuildState& bs) {
    for (auto& [index, entry] : bs.virt.locals) {
      if (!entry.dirty) continue;
      emit_store64(bs, entry.addr, GKey::local(index));
      entry.dirty = false;
    }
    for (size_t pos = 0; pos < bs.virt.stack_addrs.size(); pos++) {
      emit_store64(bs, bs.virt.stack_addrs[pos], GKey::stack_slot(pos));
    }
  }

  uint64_t require_const(BuildState& bs, ValueId v, SpecializeError::Kind kind,
                         const std::string& location, const std::string& what) {
    AbstractValue av = abs_lookup(bs.abs, GKey::value(v));
    if (!av.is_const()) fail(kind, location, what + " is not a compile-time constant");
    return av.value;
  }

  // Handles one intrinsic. Returns false when the block build must stop
  // because a runtime value split terminated it.
  bool handle_intrinsic(uint32_t sbi, BuildState& bs, const Instruction& gi,
                        uint32_t gblock, size_t inst_index) {
    const std::string location = loc(gblock, inst_index);
    switch (gi.intrinsic) {
      case IntrinsicOp::PushContext: {
        uint64_t v = require_const(bs, gi.args[0], SpecializeError::Kind::NonConstContext,
                                   location, "push_context argument");
        bs.ctx.push_back(v);
        return true;
      }
      case IntrinsicOp::UpdateContext: {
        uint64_t v = require_const(bs, gi.args[0], SpecializeError::Kind::NonConstContext,
                                   location, "update_context argument");
        if (bs.ctx.empty()) {
          bs.ctx.push_back(v);  // update on an empty stack behaves as push
        } else {
          bs.ctx.back() = v;
        }
        return true;
      }
      case IntrinsicOp::PopContext:
        if (bs.ctx.empty()) {
          fail(SpecializeError::Kind::PopEmptyContext, location,
               "pop_context on an empty context stack");
        }
        bs.ctx.pop_back();
        return true;
      case IntrinsicOp::AssertConst:
        require_const(bs, gi.args[0], SpecializeError::Kind::AssertConstFailed, location,
                      "assert_const argument");
        return true;

      case IntrinsicOp::SpecializedValue:
        return handle_value_split(sbi, bs, gi, gblock, inst_index);

      case IntrinsicOp::LoadRegister: {
        uint64_t idx = require_const(bs, gi.args[0],
                                     SpecializeError::Kind::NonConstRegisterIndex,
                                     location, "load_register index");
        emit_alias(bs, GKey::value(gi.result), GKey::reg(idx));
        return true;
      }
      case IntrinsicOp::StoreRegister: {
        uint64_t idx = require_const(bs, gi.args[0],
                                     SpecializeError::Kind::NonConstRegisterIndex,
                                     location, "store_register index");
        emit_alias(bs, GKey::reg(idx), GKey::value(gi.args[1]));
        return true;
      }

      case IntrinsicOp::LocalRead: {
        uint64_t idx = require_const(bs, gi.args[0],
                                     SpecializeError::Kind::NonConstStateIndex, location,
                                     "local_read index");
        GKey result = GKey::value(gi.result);
        GKey addr = GKey::value(gi.args[1]);
        auto it = bs.virt.locals.find(idx);
        if (it != bs.virt.locals.end()) {
          emit_alias(bs, result, GKey::local(idx));
          return true;
        }
        emit_load64(bs, result, addr);
        bs.virt.locals[idx] = LocalCacheEntry{addr, false};
        emit_alias(bs, GKey::local(idx), result);
        return true;
      }
      case IntrinsicOp::LocalWrite: {
        uint64_t idx = require_const(bs, gi.args[0],
                                     SpecializeError::Kind::NonConstStateIndex, location,
                                     "local_write index");
        bs.virt.locals[idx] = LocalCacheEntry{GKey::value(gi.args[1]), true};
        emit_alias(bs, GKey::local(idx), GKey::value(gi.args[2]));
        return true;
      }

      case IntrinsicOp::StackPush: {
        size_t pos = bs.virt.stack_addrs.size();
        bs.virt.stack_addrs.push_back(GKey::value(gi.args[0]));
        emit_alias(bs, GKey::stack_slot(pos), GKey::value(gi.args[1]));
        return true;
      }
      case IntrinsicOp::StackPop: {
        GKey result = GKey::value(gi.result);
        if (!bs.virt.stack_addrs.empty()) {
          size_t pos = bs.virt.stack_addrs.size() - 1;
          emit_alias(bs, result, GKey::stack_slot(pos));
          bs.virt.stack_addrs.pop_back();
          return true;
        }
        emit_load64(bs, result, GKey::value(gi.args[0]));
        return true;
      }
      case IntrinsicOp::StackRead: {
        uint64_t depth = require_const(bs, gi.args[0],
                                       SpecializeError::Kind::NonConstStateIndex, location,
                                       "stack_read depth");
        GKey result = GKey::value(gi.result);
        if (depth < bs.virt.stack_addrs.size()) {
          size_t pos = bs.virt.stack_addrs.size() - 1 - depth;
          emit_alias(bs, result, GKey::stack_slot(pos));
        } else {
          emit_load64(bs, result, GKey::value(gi.args[1]));
        }
        return true;
      }
      case IntrinsicOp::StackWrite: {
        uint64_t depth = require_const(bs, gi.args[0],
                                       SpecializeError::Kind::NonConstStateIndex, location,
                                       "stack_write depth");
        if (depth < bs.virt.stack_addrs.size()) {
          size_t pos = bs.virt.stack_addrs.size() - 1 - depth;
          emit_alias(bs, GKey::stack_slot(pos), GKey::value(gi.args[2]));
        } else {
          emit_store64(bs, GKey::value(gi.args[1]), GKey::value(gi.args[2]));
        }
        return true;
      }

      case IntrinsicOp::Flush:
        flush_state(bs);
        return true;
    }
    return true;
  }

  // "The Trick": splits the remainder of the block over the declared value
  // range, one child context per possible value.
  bool handle_value_split(uint32_t sbi, BuildState& bs, const Instruction& gi,
                          uint32_t gblock, size_t inst_index) {
    const std::string location = loc(gblock, inst_index);
    GKey vkey = GKey::value(gi.args[0]);
    uint64_t lo = require_const(bs, gi.args[1], SpecializeError::Kind::NonConstSplitBounds,
                                location, "specialized_value low bound");
    uint64_t hi = require_const(bs, gi.args[2], SpecializeError::Kind::NonConstSplitBounds,
                                location, "specialized_value high bound");
    if (lo > hi) {
      fail(SpecializeError::Kind::SplitRangeTooWide, location,
           "specialized_value bounds out of order");
    }
    uint64_t range = hi - lo + 1;  // lo <= hi, so no overflow
    if (range == 0 || range > opts_.value_split_bound) {
      fail(SpecializeError::Kind::SplitRangeTooWide, location,
           "specialized_value range of " + std::to_string(range) + " exceeds bound " +
               std::to_string(opts_.value_split_bound));
    }

    GKey result = GKey::value(gi.result);
    AbstractValue vabs = abs_lookup(bs.abs, vkey);

    if (vabs.is_const()) {
      if (vabs.value < lo || vabs.value > hi) {
        bs.term = STerm{TermKind::Trap, false, {}, {}, "specialized_value out of range"};
        bs.terminated = true;
        return false;
      }
      bs.ctx.push_back(vabs.value);
      emit_alias(bs, result, vkey);  // abs already pins the value
      return true;
    }

    if (range == 1) {
      // Degenerate single-value range: no runtime branch; the promise pins
      // the value.
      bs.ctx.push_back(lo);
      emit_const(bs, result, ScalarType::I64, lo);
      return true;
    }

    // Runtime dispatch: guard v-lo < range, then br_table into one arm per
    // value; out-of-range traps (a violated promise should be loud).
    GKey dkey = vkey;
    if (lo != 0) {
      GKey lo_const = fresh_synth(ScalarType::I64);
      emit_const(bs, lo_const, ScalarType::I64, lo);
      dkey = fresh_synth(ScalarType::I64);
      Item sub;
      sub.inst = SInst{true, dkey, ScalarType::I64, Opcode::Isub, {vkey, lo_const}};
      bs.items.push_back(sub);
      bs.abs.erase(dkey);
    }
    GKey range_const = fresh_synth(ScalarType::I64);
    emit_const(bs, range_const, ScalarType::I64, range);
    GKey in_bounds = fresh_synth(ScalarType::I32);
    Item cmp;
    cmp.inst = SInst{true, in_bounds, ScalarType::I32, Opcode::IcmpLtU, {dkey, range_const}};
    bs.items.push_back(cmp);
    bs.abs.erase(in_bounds);

    auto [split_it, created] =
        split_blocks_.try_emplace({sbi, uint32_t(inst_index)}, std::pair{0u, 0u});
    if (created) {
      uint32_t dispatch = new_block(Origin::Dispatch, blocks_[sbi].ctx, gblock, 0);
      uint32_t trap = new_block(Origin::TrapStub, blocks_[sbi].ctx, gblock, 0);
      split_it = split_blocks_.find({sbi, uint32_t(inst_index)});
      split_it->second = {dispatch, trap};
    }
    auto [dispatch_sbi, trap_sbi] = split_it->second;

    {
      SpecBlock& trap_block = blocks_[trap_sbi];
      trap_block.items.clear();
      trap_block.term = STerm{TermKind::Trap, false, {}, {}, "specialized_value out of range"};
    }

    // Arms continue the generic block after the intrinsic, each under a
    // child context with the intrinsic's result pinned to its value.
    std::vector<SEdge> arm_edges;
    for (uint64_t k = 0; k < range; k++) {
      uint64_t value = lo + k;
      std::vector<uint64_t> child = bs.ctx;
      child.push_back(value);
      uint32_t child_ctx = intern_context(std::move(child));
      std::pair<GKey, uint64_t> seed{result, value};
      uint32_t arm = evaluate_target(child_ctx, gblock, uint32_t(inst_index + 1), {},
                                     bs.abs, bs.virt, &seed);
      arm_edges.push_back(SEdge{arm, {}});
    }

    {
      SpecBlock& dispatch = blocks_[dispatch_sbi];
      dispatch.items.clear();
      GKey sel = fresh_synth(ScalarType::I32);
      Item tr;
      tr.inst = SInst{true, sel, ScalarType::I32, Opcode::Trunc, {dkey}};
      dispatch.items.push_back(tr);
      dispatch.term.kind = TermKind::BrTable;
      dispatch.term.has_value = true;
      dispatch.term.value = sel;
      dispatch.term.edges = std::move(arm_edges);
      dispatch.term.edges.push_back(SEdge{trap_sbi, {}});
      dispatch.term.message.clear();
    }

    bs.term.kind = TermKind::BrIf;
    bs.term.has_value = true;
    bs.term.value = in_bounds;
    bs.term.edges = {SEdge{dispatch_sbi, {}}, SEdge{trap_sbi, {}}};
    bs.terminated = true;
    return false;
  }

  void build_terminator(BuildState& bs, uint32_t gblock) {
    const Terminator& t = target_.blocks[gblock].term;
    uint32_t ctx = intern_context(bs.ctx);

    auto edge_keys = [&](const Edge& e) {
      std::vector<GKey> keys;
      keys.reserve(e.args.size());
      for (ValueId a : e.args) keys.push_back(GKey::value(a));
      return keys;
    };
    auto branch_to = [&](const Edge& e) {
      std::vector<GKey> keys = edge_keys(e);
      uint32_t sbi = evaluate_target(ctx, e.target, 0, keys, bs.abs, bs.virt);
      return SEdge{sbi, std::move(keys)};
    };

    switch (t.kind) {
      case TermKind::Br:
        bs.term = STerm{TermKind::Br, false, {}, {branch_to(t.edges[0])}, ""};
        break;
      case TermKind::BrIf: {
        AbstractValue cond = abs_lookup(bs.abs, GKey::value(t.value));
        if (cond.is_const()) {
          const Edge& taken = cond.value != 0 ? t.edges[0] : t.edges[1];
          bs.term = STerm{TermKind::Br, false, {}, {branch_to(taken)}, ""};
        } else {
          bs.term = STerm{TermKind::BrIf,
                          true,
                          GKey::value(t.value),
                          {branch_to(t.edges[0]), branch_to(t.edges[1])},
                          ""};
        }
        break;
      }
      case TermKind::BrTable: {
        AbstractValue sel = abs_lookup(bs.abs, GKey::value(t.value));
        size_t n = t.edges.size() - 1;
        if (sel.is_const()) {
          uint64_t index = sel.value;
          const Edge& taken = index < n ? t.edges[size_t(index)] : t.edges[n];
          bs.term = STerm{TermKind::Br, false, {}, {branch_to(taken)}, ""};
        } else {
          STerm st{TermKind::BrTable, true, GKey::value(t.value), {}, ""};
          for (const Edge& e : t.edges) st.edges.push_back(branch_to(e));
          bs.term = st;
        }
        break;
      }
      case TermKind::Return:
        bs.term = STerm{TermKind::Return, t.value != kNoValue,
                        t.value != kNoValue ? GKey::value(t.value) : GKey{}, {}, ""};
        break;
      case TermKind::Trap:
        bs.term = STerm{TermKind::Trap, false, {}, {}, t.message};
        break;
    }
    bs.terminated = true;
  }

  void build_block(uint32_t sbi) {
    {
      SpecBlock& sb = blocks_[sbi];
      sb.in_worklist = false;
      sb.rebuilds++;
      total_rebuilds_++;
      if (sb.rebuilds > opts_.max_rebuilds_per_block) {
        fail(SpecializeError::Kind::RebuildCeiling,
             "func @" + target_.name + ", block ^" + target_.blocks[sb.gblock].label,
             "block rebuilt more than " + std::to_string(opts_.max_rebuilds_per_block) +
                 " times without converging");
      }
    }

    BuildState bs;
    bs.abs = blocks_[sbi].entry_abs;
    bs.virt = blocks_[sbi].entry_virt;
    bs.ctx = contexts_[blocks_[sbi].ctx];

    for (const auto& [key, value] : blocks_[sbi].pre_defs) {
      emit_const(bs, key, ScalarType::I64, value);
    }

    const uint32_t gblock = blocks_[sbi].gblock;
    const Block& gb = target_.blocks[gblock];
    for (size_t i = blocks_[sbi].offset; i < gb.insts.size(); i++) {
      const Instruction& gi = gb.insts[i];
      if (gi.op == Opcode::Intrinsic) {
        if (!handle_intrinsic(sbi, bs, gi, gblock, i)) break;
      } else {
        transcribe(bs, gi);
      }
    }
    if (!bs.terminated) build_terminator(bs, gblock);

    SpecBlock& sb = blocks_[sbi];
    sb.items = std::move(bs.items);
    sb.term = std::move(bs.term);
    sb.exit_virt = std::move(bs.virt);
  }

  // ---- request checking and seeding --------------------------------------

  void check_request() {
    if (req_.output_name.empty()) {
      fail(SpecializeError::Kind::BadRequest, "", "request lacks an output name");
    }
    if (target_.blocks.empty() || !target_.blocks[0].params.empty()) {
      fail(SpecializeError::Kind::BadRequest, "",
           "target @" + target_.name + " is not a valid function (validate the module)");
    }
    if (req_.arg_modes.size() != target_.params.size()) {
      fail(SpecializeError::Kind::BadRequest, "",
           "request has " + std::to_string(req_.arg_modes.size()) + " arg modes, @" +
               target_.name + " takes " + std::to_string(target_.params.size()));
    }
    std::vector<std::pair<uint64_t, uint64_t>> spans;
    for (const ArgMode& mode : req_.arg_modes) {
      if (mode.kind != ArgModeKind::Memory) continue;
      uint64_t end = mode.addr + mode.len;
      if (end < mode.addr || end > m_.memory.size) {
        fail(SpecializeError::Kind::BadRequest, "",
             "memory promise [" + std::to_string(mode.addr) + ", +" +
                 std::to_string(mode.len) + ") exceeds module memory");
      }
      spans.emplace_back(mode.addr, end);
      ranges_.push_back(ConstRange{mode.addr, mode.len});
    }
    std::sort(spans.begin(), spans.end());
    for (size_t i = 1; i < spans.size(); i++) {
      if (spans[i].first < spans[i - 1].second) {
        fail(SpecializeError::Kind::BadRequest, "", "overlapping memory promises");
      }
    }
  }

  // The prologue carries no code: promised-constant parameters are seeded
  // into the entry abstract state only, so uses fold wherever analysis can
  // see through them and fall back to reading the parameter (equal to the
  // promise by contract) where it cannot.
  uint32_t build_prologue() {
    uint32_t sbi = new_block(Origin::Prologue, intern_context({}), 0, 0);
    BuildState bs;
    for (size_t i = 0; i < target_.params.size(); i++) {
      const ArgMode& mode = req_.arg_modes[i];
      ValueId p = target_.params[i];
      if (mode.kind == ArgModeKind::Const) {
        bs.abs[GKey::value(p)] =
            AbstractValue::constant(target_.value_type(p), mode.value);
      } else if (mode.kind == ArgModeKind::Memory) {
        bs.abs[GKey::value(p)] =
            AbstractValue::constant(target_.value_type(p), mode.addr);
      }
    }
    uint32_t entry_copy = evaluate_target(intern_context({}), 0, 0, {}, bs.abs, bs.virt);
    bs.term = STerm{TermKind::Br, false, {}, {SEdge{entry_copy, {}}}, ""};
    SpecBlock& sb = blocks_[sbi];
    sb.items = std::move(bs.items);
    sb.term = std::move(bs.term);
    return sbi;
  }

  // ---- post-fixpoint passes ----------------------------------------------

  void prune_unreachable() {
    std::vector<uint32_t> order;
    std::vector<uint32_t> remap(blocks_.size(), kNoBlock);
    std::deque<uint32_t> queue{0};
    remap[0] = 0;
    while (!queue.empty()) {
      uint32_t b = queue.front();
      queue.pop_front();
      order.push_back(b);
      for (const SEdge& e : blocks_[b].term.edges) {
        if (remap[e.target] == kNoBlock) {
          remap[e.target] = 1;  // provisional
          queue.push_back(e.target);
        }
      }
    }
    std::vector<SpecBlock> kept;
    kept.reserve(order.size());
    for (size_t i = 0; i < order.size(); i++) {
      remap[order[i]] = uint32_t(i);
      kept.push_back(std::move(blocks_[order[i]]));
    }
    for (SpecBlock& sb : kept) {
      for (SEdge& e : sb.term.edges) e.target = remap[e.target];
    }
    blocks_ = std::move(kept);
  }

  // Where a predecessor carries virtual state that its successor's entry
  // dropped, the dirty entries are written back on the edge via a small
  // flush block.
  void insert_edge_flushes() {
    size_t original_count = blocks_.size();
    for (uint32_t p = 0; p < original_count; p++) {
      for (size_t ei = 0; ei < blocks_[p].term.edges.size(); ei++) {
        uint32_t succ = blocks_[p].term.edges[ei].target;
        if (succ >= original_count) continue;
        const VirtState& exit = blocks_[p].exit_virt;
        const VirtState& entry = blocks_[succ].entry_virt;

        std::vector<Item> stores;
        auto store = [&](const GKey& addr, const GKey& value) {
          Item item;
          item.inst = SInst{false, {}, ScalarType::I64, Opcode::Store64, {addr, value}};
          stores.push_back(std::move(item));
        };
        for (const auto& [index, cache] : exit.locals) {
          if (!cache.dirty) continue;
          auto it = entry.locals.find(index);
          if (it == entry.locals.end()) store(cache.addr, GKey::local(index));
        }
        if (!exit.stack_addrs.empty() && !entry.stack_valid) {
          for (size_t pos = 0; pos < exit.stack_addrs.size(); pos++) {
            store(exit.stack_addrs[pos], GKey::stack_slot(pos));
          }
        }
        if (stores.empty()) continue;

        uint32_t flush = new_block(Origin::EdgeFlush, blocks_[p].ctx, blocks_[p].gblock, 0);
        SpecBlock& fb = blocks_[flush];
        fb.items = std::move(stores);
        fb.term = STerm{TermKind::Br, false, {},
                        {SEdge{succ, std::move(blocks_[p].term.edges[ei].args)}}, ""};
        blocks_[p].term.edges[ei] = SEdge{flush, {}};
      }
    }
  }

  // Drops pure/load items whose results are never consumed. Usedness is
  // per-key and global: coarse but safe.
  void eliminate_dead_items() {
    std::set<GKey> used;
    bool changed = true;
    auto mark = [&](const GKey& k) {
      if (used.insert(k).second) changed = true;
    };
    auto item_live = [&](const Item& item) {
      if (item.kind == Item::Kind::Alias) return used.count(item.alias_dst) > 0;
      const SInst& inst = item.inst;
      switch (inst.op) {
        case Opcode::Store8:
        case Opcode::Store32:
        case Opcode::Store64:
        case Opcode::Call:
        case Opcode::PrintI64:
          return true;
        default:
          return inst.has_result && used.count(inst.result) > 0;
      }
    };

    while (changed) {
      changed = false;
      for (const SpecBlock& sb : blocks_) {
        for (const Item& item : sb.items) {
          if (!item_live(item)) continue;
          if (item.kind == Item::Kind::Alias) {
            mark(item.alias_src);
          } else {
            for (const GKey& a : item.inst.args) mark(a);
          }
        }
        if (sb.term.has_value) mark(sb.term.value);
        for (const SEdge& e : sb.term.edges) {
          for (const GKey& a : e.args) mark(a);
        }
      }
    }

    for (SpecBlock& sb : blocks_) {
      std::vector<Item> kept;
      kept.reserve(sb.items.size());
      for (Item& item : sb.items) {
        if (item_live(item)) kept.push_back(std::move(item));
      }
      sb.items = std::move(kept);
    }
  }

  struct Liveness {
    std::vector<std::set<GKey>> gen, kill, live_in;
  };

  bool is_global_key(const GKey& k) const {
    return k.kind == GKey::Kind::Value && param_values_.count(ValueId(k.index)) > 0;
  }

  Liveness compute_liveness() {
    size_t n = blocks_.size();
    Liveness lv;
    lv.gen.resize(n);
    lv.kill.resize(n);
    lv.live_in.resize(n);

    for (size_t b = 0; b < n; b++) {
      const SpecBlock& sb = blocks_[b];
      std::set<GKey>& gen = lv.gen[b];
      std::set<GKey>& kill = lv.kill[b];
      auto use = [&](const GKey& k) {
        if (!kill.count(k) && !is_global_key(k)) gen.insert(k);
      };
      for (const auto& [k, t] : sb.params) kill.insert(k);
      for (const Item& item : sb.items) {
        if (item.kind == Item::Kind::Alias) {
          use(item.alias_src);
          kill.insert(item.alias_dst);
        } else {
          for (const GKey& a : item.inst.args) use(a);
          if (item.inst.has_result) kill.insert(item.inst.result);
        }
      }
      if (sb.term.has_value) use(sb.term.value);
      for (const SEdge& e : sb.term.edges) {
        for (const GKey& a : e.args) use(a);
      }
    }

    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t b = n; b-- > 0;) {
        std::set<GKey> in = lv.gen[b];
        for (const SEdge& e : blocks_[b].term.edges) {
          for (const GKey& k : lv.live_in[e.target]) {
            if (!lv.kill[b].count(k)) in.insert(k);
          }
        }
        if (in != lv.live_in[b]) {
          lv.live_in[b] = std::move(in);
          changed = true;
        }
      }
    }
    return lv;
  }

  // Reads of never-written registers observe zero: materialize the zeros at
  // function entry for register cells live into it.
  void materialize_entry_defaults(const Liveness& lv) {
    std::vector<Item> defaults;
    for (const GKey& k : lv.live_in[0]) {
      if (k.kind == GKey::Kind::Reg) {
        Item item;
        item.inst = SInst{true, k, ScalarType::I64, Opcode::ConstI64, {}, 0};
        defaults.push_back(std::move(item));
      } else {
        fail(SpecializeError::Kind::Internal, "",
             "value with no definition on some path reached the entry block");
      }
    }
    if (!defaults.empty()) {
      blocks_[0].items.insert(blocks_[0].items.begin(),
                              std::make_move_iterator(defaults.begin()),
                              std::make_move_iterator(defaults.end()));
    }
  }

  // ---- SSA repair ---------------------------------------------------------

  struct RepairPlan {
    // Keys that become fresh block parameters, per block, in sorted order.
    std::vector<std::vector<GKey>> params;
    uint64_t cut_points = 0;
  };

  RepairPlan plan_repair(SsaRepairMode mode, const Liveness& lv, const Dominators& dom,
                         const std::vector<std::vector<uint32_t>>& succs) {
    size_t n = blocks_.size();
    RepairPlan plan;
    plan.params.resize(n);
    std::vector<std::set<GKey>> chosen(n);

    if (mode == SsaRepairMode::Naive) {
      for (size_t b = 1; b < n; b++) chosen[b] = lv.live_in[b];
    } else {
      std::vector<std::vector<uint32_t>> preds(n);
      for (uint32_t b = 0; b < n; b++) {
        for (uint32_t s : succs[b]) preds[s].push_back(b);
      }

      // Highest same-context ancestor, by fixpoint. Blocks created at
      // context changes are their own HSCA; inbound HSCAs join at the
      // dominator-tree LCA; a join that fails to dominate makes the block a
      // cut-point (and its own HSCA).
      std::vector<bool> own(n, false), cut(n, false);
      own[0] = true;
      for (uint32_t b = 1; b < n; b++) {
        for (uint32_t p : preds[b]) {
          if (blocks_[p].ctx != blocks_[b].ctx) {
            own[b] = true;
            cut[b] = true;
            break;
          }
        }
      }
      std::vector<uint32_t> hsca(n, kNoBlock);
      for (uint32_t b = 0; b < n; b++) {
        if (own[b]) hsca[b] = b;
      }
      for (size_t round = 0; round < 2 * n + 4; round++) {
        bool changed = false;
        for (uint32_t b : dom.rpo()) {
          if (own[b]) continue;
          uint32_t join = kNoBlock;
          for (uint32_t p : preds[b]) {
            if (hsca[p] == kNoBlock) continue;
            join = join == kNoBlock ? hsca[p] : dom.lca(join, hsca[p]);
          }
          if (join == kNoBlock) continue;
          if (!dom.dominates(join, b)) {
            own[b] = true;
            cut[b] = true;
            join = b;
          }
          if (hsca[b] != join) {
            hsca[b] = join;
            changed = true;
          }
        }
        if (!changed) break;
      }

      for (uint32_t b = 1; b < n; b++) {
        if (cut[b]) {
          plan.cut_points++;
          chosen[b] = lv.live_in[b];
        }
      }

      // Keys defined in more than one block still need classic phi
      // placement at their iterated dominance frontier, pruned by liveness;
      // context cuts alone do not cover e.g. register cells merging inside
      // one context.
      std::map<GKey, std::vector<uint32_t>> defs;
      for (uint32_t b = 0; b < n; b++) {
        for (const auto& [k, t] : blocks_[b].params) defs[k].push_back(b);
        for (const GKey& k : chosen[b]) defs[k].push_back(b);
        for (const Item& item : blocks_[b].items) {
          const GKey* k = nullptr;
          if (item.kind == Item::Kind::Alias) {
            k = &item.alias_dst;
          } else if (item.inst.has_result) {
            k = &item.inst.result;
          }
          if (k && (defs[*k].empty() || defs[*k].back() != b)) defs[*k].push_back(b);
        }
      }
      auto frontiers = dom.frontiers(succs);
      for (auto& [key, def_blocks] : defs) {
        if (def_blocks.size() < 2) continue;
        std::deque<uint32_t> work(def_blocks.begin(), def_blocks.end());
        std::set<uint32_t> placed;
        std::set<uint32_t> visited(def_blocks.begin(), def_blocks.end());
        while (!work.empty()) {
          uint32_t d = work.front();
          work.pop_front();
          for (uint32_t f : frontiers[d]) {
            if (placed.count(f)) continue;
            if (!lv.live_in[f].count(key)) continue;
            placed.insert(f);
            chosen[f].insert(key);
            if (visited.insert(f).second) work.push_back(f);
          }
        }
      }
    }

    for (size_t b = 0; b < n; b++) {
      plan.params[b].assign(chosen[b].begin(), chosen[b].end());
    }
    return plan;
  }

  // ---- renaming and emission ----------------------------------------------

  struct RenameFailure {};

  Function rename_and_emit(const RepairPlan& plan, const Dominators& dom,
                           uint64_t* added_params) {
    size_t n = blocks_.size();
    Function out;
    out.name = req_.output_name;
    out.result = target_.result;

    std::map<std::string, int> name_counters;
    auto unique_name = [&](std::string base) {
      auto [it, inserted] = name_counters.try_emplace(base, 0);
      if (inserted) return base;
      it->second++;
      return base + "." + std::to_string(it->second);
    };
    auto new_value = [&](const std::string& base, ScalarType t) {
      out.values.push_back(ValueInfo{unique_name(base), t});
      return ValueId(out.values.size() - 1);
    };
    auto key_base_name = [&](const GKey& k) -> std::string {
      switch (k.kind) {
        case GKey::Kind::Value:
          return target_.value_name(ValueId(k.index));
        case GKey::Kind::Synth:
          return "t";
        case GKey::Kind::Reg:
          return "reg" + std::to_string(k.index);
        case GKey::Kind::LocalVal:
          return "loc" + std::to_string(k.index);
        case GKey::Kind::StackVal:
          return "stk" + std::to_string(k.index);
      }
      return "v";
    };

    for (ValueId p : target_.params) {
      out.params.push_back(new_value(target_.value_name(p), target_.value_type(p)));
    }

    // Inline the prologue when it is trivial: no instructions, successor has
    // no repair params and no other predecessors. Keeps all-runtime
    // specializations structurally identical to their input.
    uint32_t entry = 0;
    if (blocks_[0].items.empty() && blocks_[0].term.kind == TermKind::Br &&
        plan.params[blocks_[0].term.edges[0].target].empty()) {
      uint32_t succ = blocks_[0].term.edges[0].target;
      bool sole_pred = true;
      for (uint32_t b = 0; b < n && sole_pred; b++) {
        if (b == 0) continue;
        for (const SEdge& e : blocks_[b].term.edges) {
          if (e.target == succ) sole_pred = false;
        }
      }
      if (sole_pred && blocks_[succ].params.empty()) entry = succ;
    }

    // Emission order: entry first, then creation order.
    std::vector<uint32_t> order;
    std::vector<uint32_t> out_index(n, kNoBlock);
    order.push_back(entry);
    for (uint32_t b = 0; b < n; b++) {
      if (b != entry && !(entry != 0 && b == 0)) order.push_back(b);
    }
    for (size_t i = 0; i < order.size(); i++) out_index[order[i]] = uint32_t(i);

    std::map<std::string, int> label_counters;
    auto unique_label = [&](std::string base) {
      auto [it, inserted] = label_counters.try_emplace(base, 0);
      if (inserted) return base;
      it->second++;
      return base + "." + std::to_string(it->second);
    };

    out.blocks.resize(order.size());
    std::vector<std::vector<ValueId>> repair_param_ids(n);
    for (uint32_t b : order) {
      const SpecBlock& sb = blocks_[b];
      Block& ob = out.blocks[out_index[b]];
      std::string base;
      switch (sb.origin) {
        case Origin::Prologue:
          base = "pro";
          break;
        case Origin::Normal:
          base = target_.blocks[sb.gblock].label + ".c" + std::to_string(sb.ctx);
          break;
        case Origin::Arm:
          base = target_.blocks[sb.gblock].label + ".c" + std::to_string(sb.ctx) + ".o" +
                 std::to_string(sb.offset);
          break;
        case Origin::Dispatch:
          base = target_.blocks[sb.gblock].label + ".c" + std::to_string(sb.ctx) + ".sv";
          break;
        case Origin::TrapStub:
          base = target_.blocks[sb.gblock].label + ".c" + std::to_string(sb.ctx) + ".svtrap";
          break;
        case Origin::EdgeFlush:
          base = "flush.c" + std::to_string(sb.ctx);
          break;
      }
      ob.label = unique_label(base);
      for (const auto& [k, t] : sb.params) {
        ob.params.push_back(new_value(key_base_name(k), t));
      }
      for (const GKey& k : plan.params[b]) {
        ValueId v = new_value(key_base_name(k), type_of(k));
        ob.params.push_back(v);
        repair_param_ids[b].push_back(v);
        if (added_params) (*added_params)++;
      }
    }

    // Scoped renaming over the dominator tree.
    std::map<GKey, ValueId> renames;
    std::vector<std::pair<GKey, std::optional<ValueId>>> undo;
    auto bind = [&](const GKey& k, ValueId v) {
      auto it = renames.find(k);
      undo.emplace_back(k, it == renames.end() ? std::nullopt : std::optional(it->second));
      renames[k] = v;
    };
    auto resolve = [&](const GKey& k) -> ValueId {
      auto it = renames.find(k);
      if (it != renames.end()) return it->second;
      if (k.kind == GKey::Kind::Value) {
        for (size_t i = 0; i < target_.params.size(); i++) {
          if (target_.params[i] == ValueId(k.index)) return out.params[i];
        }
      }
      throw RenameFailure{};
    };
    auto unwind_to = [&](size_t mark) {
      while (undo.size() > mark) {
        auto& [k, prev] = undo.back();
        if (prev) {
          renames[k] = *prev;
        } else {
          renames.erase(k);
        }
        undo.pop_back();
      }
    };

    std::vector<std::vector<uint32_t>> dom_children(n);
    for (uint32_t b = 1; b < n; b++) {
      if (!dom.reachable(b)) continue;
      dom_children[dom.idom(b)].push_back(b);
    }

    // Renames one block's body; emission is skipped for a dropped prologue.
    auto process = [&](uint32_t b) {
      const SpecBlock& sb = blocks_[b];
      const bool emit = out_index[b] != kNoBlock;
      Block* ob = emit ? &out.blocks[out_index[b]] : nullptr;
      size_t pi = 0;
      for (const auto& [k, t] : sb.params) bind(k, ob->params[pi++]);
      for (const GKey& k : plan.params[b]) bind(k, ob->params[pi++]);

      for (const Item& item : sb.items) {
        if (item.kind == Item::Kind::Alias) {
          bind(item.alias_dst, resolve(item.alias_src));
          continue;
        }
        const SInst& si = item.inst;
        Instruction inst;
        inst.op = si.op;
        inst.imm = si.imm;
        inst.callee = si.callee;
        for (const GKey& a : si.args) inst.args.push_back(resolve(a));
        if (si.has_result) {
          ValueId r = new_value(key_base_name(si.result), si.rtype);
          inst.result = r;
          bind(si.result, r);
        }
        if (emit) ob->insts.push_back(std::move(inst));
      }

      if (!emit) return;
      Terminator term;
      term.kind = sb.term.kind;
      term.message = sb.term.message;
      if (sb.term.has_value) term.value = resolve(sb.term.value);
      for (const SEdge& e : sb.term.edges) {
        Edge oe;
        oe.target = out_index[e.target];
        for (const GKey& a : e.args) oe.args.push_back(resolve(a));
        for (const GKey& k : plan.params[e.target]) oe.args.push_back(resolve(k));
        term.edges.push_back(std::move(oe));
      }
      ob->term = std::move(term);
    };

    struct Frame {
      uint32_t block;
      size_t child;
      size_t undo_mark;  // renames state before this block's body
    };
    std::vector<Frame> stack;
    stack.push_back({0, 0, undo.size()});
    process(0);
    while (!stack.empty()) {
      Frame& frame = stack.back();
      if (frame.child < dom_children[frame.block].size()) {
        uint32_t next = dom_children[frame.block][frame.child++];
        size_t mark = undo.size();
        process(next);
        stack.push_back({next, 0, mark});
      } else {
        unwind_to(frame.undo_mark);
        stack.pop_back();
      }
    }

    return out;
  }

 public:
  Function run_impl(SpecializeStats* stats) {
    check_request();
    for (ValueId p : target_.params) param_values_.insert(p);

    build_prologue();
    while (!worklist_.empty()) {
      uint32_t sbi = worklist_.front();
      worklist_.pop_front();
      build_block(sbi);
    }

    prune_unreachable();
    insert_edge_flushes();
    eliminate_dead_items();

    Liveness lv = compute_liveness();
    materialize_entry_defaults(lv);
    lv = compute_liveness();

    std::vector<std::vector<uint32_t>> succs(blocks_.size());
    for (uint32_t b = 0; b < blocks_.size(); b++) {
      for (const SEdge& e : blocks_[b].term.edges) succs[b].push_back(e.target);
    }
    Dominators dom(succs);

    SpecializeStats local_stats;
    SpecializeStats& st = stats ? *stats : local_stats;
    st.contexts = contexts_.size();
    st.blocks = blocks_.size();
    st.rebuilds = total_rebuilds_;

    RepairPlan plan = plan_repair(opts_.repair, lv, dom, succs);
    st.cut_points = plan.cut_points;
    try {
      st.added_params = 0;
      return rename_and_emit(plan, dom, &st.added_params);
    } catch (RenameFailure&) {
      if (opts_.repair == SsaRepairMode::Naive) {
        fail(SpecializeError::Kind::Internal, "",
             "naive SSA repair failed to resolve a value");
      }
      st.naive_fallback = true;
      RepairPlan naive = plan_repair(SsaRepairMode::Naive, lv, dom, succs);
      st.added_params = 0;
      return rename_and_emit(naive, dom, &st.added_params);
    }
  }
};

Function Specializer::run(SpecializeStats* stats) { return run_impl(stats); }

}  // namespace

Function specialize_function(const Module& m, const SpecializationRequest& req,
                             const SpecializeOptions& opts, SpecializeStats* stats) {
  const Function* target = m.find_function(req.target);
  if (!target) {
    throw SpecializeError(SpecializeError::Kind::BadRequest, "",
                          "no function named " + req.target);
  }
  Specializer spec(m, req, opts);
  return spec.run(stats);
}

Module specialize(const Module& m, const SpecializationRequest& req,
                  const SpecializeOptions& opts, SpecializeStats* stats) {
  if (m.find_function(req.output_name)) {
    throw SpecializeError(SpecializeError::Kind::BadRequest, "",
                          "output name @" + req.output_name + " already exists");
  }
  Module out = m;
  out.functions.push_back(specialize_function(m, req, opts, stats));
  return out;
}

}  // namespace peval
