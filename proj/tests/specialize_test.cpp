#include <random>

#include "doctest.h"
#include "peval/exec.hpp"
#include "peval/minvm.hpp"
#include "peval/parse.hpp"
#include "peval/print.hpp"
#include "peval/specialize.hpp"
#include "peval/validate.hpp"
#include "support/testutil.hpp"

using namespace peval;

namespace {

SpecializationRequest runtime_request(const Module& m, const std::string& target,
                                      const std::string& output) {
  SpecializationRequest req;
  req.target = target;
  req.output_name = output;
  req.arg_modes.assign(m.find_function(target)->params.size(), ArgMode::runtime());
  return req;
}

// Oracle check: polyfilled target vs specialized function on given args,
// including final memory outside the promised-constant ranges and the
// polyfill's register scratch.
void check_equivalent(const Module& m, const SpecializationRequest& req,
                      std::span<const uint64_t> args, uint64_t fuel = 1'000'000) {
  PolyfillResult poly = polyfill_intrinsics(m);
  ExecResult expect = run(poly.module, req.target, args, {}, fuel);
  std::vector<ConstRange> excluded;
  for (const ArgMode& mode : req.arg_modes) {
    if (mode.kind == ArgModeKind::Memory) excluded.push_back({mode.addr, mode.len});
  }
  for (const auto& [fn, region] : poly.scratch_regions) excluded.push_back(region);
  for (SsaRepairMode mode : {SsaRepairMode::Hsca, SsaRepairMode::Naive}) {
    SpecializeOptions opts;
    opts.repair = mode;
    Module spec = specialize(m, req, opts);
    REQUIRE(validate(spec).empty());
    ExecResult got = run(spec, req.output_name, args, {}, fuel);
    CAPTURE(mode == SsaRepairMode::Hsca ? "hsca" : "naive");
    CHECK(testutil::same_observable(expect, got));
    if (!expect.trapped && !got.trapped) {
      CHECK(testutil::same_memory_outside(expect.final_memory, got.final_memory, excluded));
    }
  }
}

size_t count_memory_ops(const Function& f) {
  size_t n = 0;
  for (const Block& b : f.blocks) {
    for (const Instruction& inst : b.insts) n += memory_access_size(inst.op) > 0;
  }
  return n;
}

bool has_cycle(const Function& f) {
  std::vector<int> state(f.blocks.size(), 0);
  std::function<bool(uint32_t)> dfs = [&](uint32_t b) {
    state[b] = 1;
    for (const Edge& e : f.blocks[b].term.edges) {
      if (state[e.target] == 1) return true;
      if (state[e.target] == 0 && dfs(e.target)) return true;
    }
    state[b] = 2;
    return false;
  };
  return dfs(0);
}

}  // namespace

TEST_CASE("specialize: all-runtime target with no intrinsics is a verbatim copy") {
  Module m = testutil::module_from(R"(
memory 64
func @f(%x: i64, %c: i32) -> i64 {
block ^entry:
  %one = const.i64 1
  %y = iadd %x, %one
  br_if %c, ^a(%y), ^b
block ^a(%p: i64):
  %q = imul %p, %p
  br ^done(%q)
block ^b:
  %r = load.64 %y
  br ^done(%r)
block ^done(%v: i64):
  return %v
}
)");
  SpecializeStats stats;
  Module out = specialize(m, runtime_request(m, "f", "f_spec"), {}, &stats);
  REQUIRE(validate(out).empty());
  const Function& spec = *out.find_function("f_spec");
  CHECK(testutil::instruction_multiset(spec) ==
        testutil::instruction_multiset(*m.find_function("f")));
  CHECK(spec.blocks.size() == m.find_function("f")->blocks.size());
  CHECK(stats.added_params == 0);
  CHECK(stats.cut_points == 0);
  check_equivalent(m, runtime_request(m, "f", "f_spec2"), {{17, 1}});
  check_equivalent(m, runtime_request(m, "f", "f_spec3"), {{17, 0}});
}

TEST_CASE("specialize: constant propagation folds branches to a single successor") {
  Module m = testutil::module_from(R"(
func @f() -> i64 {
block ^entry:
  %sel = const.i32 1
  br_table %sel, [^a, ^b, ^c], ^d
block ^a:
  %va = const.i64 10
  return %va
block ^b:
  %vb = const.i64 11
  return %vb
block ^c:
  %vc = const.i64 12
  return %vc
block ^d:
  %vd = const.i64 13
  return %vd
}
)");
  Module out = specialize(m, runtime_request(m, "f", "g"));
  REQUIRE(validate(out).empty());
  const Function& g = *out.find_function("g");
  CHECK(g.blocks.size() == 2);  // entry copy + taken case
  CHECK(g.blocks[0].term.kind == TermKind::Br);
  CHECK(run(out, "g", {}).value == 11);
}

TEST_CASE("specialize: br_table edge cases") {
  Module m = testutil::module_from(R"(
func @f(%x: i64) -> i64 {
block ^entry:
  %sel = const.i32 9
  br_table %sel, [^a, ^b], ^d
block ^a:
  %va = const.i64 10
  return %va
block ^b:
  %vb = const.i64 11
  return %vb
block ^d:
  %vd = const.i64 13
  return %vd
}
)");
  // constant selector beyond the target list folds to the default
  Module out = specialize(m, runtime_request(m, "f", "g"));
  REQUIRE(validate(out).empty());
  CHECK(run(out, "g", {{0}}).value == 13);

  // a default-only table is legal and round-trips
  Module only_default = testutil::module_from(R"(
func @f(%s: i32) -> i64 {
block ^entry:
  br_table %s, [], ^d
block ^d:
  %v = const.i64 3
  return %v
}
)");
  CHECK(parse_module(print_module(only_default)) == only_default);
  CHECK(run(only_default, "f", {{7}}).value == 3);
  check_equivalent(only_default, runtime_request(only_default, "f", "h"), {{7}});
}

TEST_CASE("specialize: three-opcode loop unrolls into one block group per opcode") {
  // ADD/SUB/GOTO in an infinite loop; the specialized CFG mirrors the
  // bytecode with a backedge for the jump.
  auto prog = minvm::assemble(R"(
top:  ADD 1 2
      SUB 3 4
      JMP top
)");
  Module m = minvm::build_min_module(prog);
  SpecializationRequest req = minvm::make_request("min_plain", prog, "looped");
  SpecializeStats stats;
  Module out = specialize(m, req, {}, &stats);
  REQUIRE(validate(out).empty());
  const Function& f = *out.find_function("looped");
  CHECK(has_cycle(f));
  // three bytecode instructions, a bounded number of blocks each
  CHECK(stats.contexts <= 8);
  CHECK(f.blocks.size() <= 3 * 4 + 2);
  // oracle: both sides spin forever and run out of fuel identically
  PolyfillResult poly = polyfill_intrinsics(m);
  ExecResult a = run(poly.module, "min_plain", {{minvm::kBytecodeBase, 0}}, {}, 10000);
  ExecResult b = run(out, "looped", {{minvm::kBytecodeBase, 0}}, {}, 10000);
  CHECK(a.trapped);
  CHECK(b.trapped);
  CHECK(a.trap_message == "out of fuel");
  CHECK(b.trap_message == "out of fuel");
  CHECK(a.metrics.prints == b.metrics.prints);
}

TEST_CASE("specialize: context intrinsic errors") {
  SUBCASE("non-constant update_context argument") {
    Module m = testutil::module_from(R"(
memory 64
func @f(%p: i64) -> i64 {
block ^entry:
  %v = load.64 %p
  intrinsic.update_context %v
  return %v
}
)");
    try {
      specialize(m, runtime_request(m, "f", "g"));
      FAIL("expected NonConstContext");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::NonConstContext);
      CHECK(e.location.find("^entry") != std::string::npos);
    }
  }
  SUBCASE("assert_const on a runtime value") {
    Module m = testutil::module_from(R"(
func @f(%x: i64) -> i64 {
block ^entry:
  intrinsic.assert_const %x
  return %x
}
)");
    try {
      specialize(m, runtime_request(m, "f", "g"));
      FAIL("expected AssertConstFailed");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::AssertConstFailed);
    }
    // with the promise in place the assert is satisfied and elided
    SpecializationRequest req;
    req.target = "f";
    req.output_name = "g";
    req.arg_modes = {ArgMode::constant(9)};
    Module out = specialize(m, req);
    CHECK(validate(out).empty());
    CHECK(run(out, "g", {{9}}).value == 9);
  }
  SUBCASE("pop on an empty context stack") {
    Module m = testutil::module_from(R"(
func @f() {
block ^entry:
  intrinsic.pop_context
  return
}
)");
    try {
      specialize(m, runtime_request(m, "f", "g"));
      FAIL("expected PopEmptyContext");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::PopEmptyContext);
    }
  }
}

TEST_CASE("specialize: context stack push/update/pop shapes contexts") {
  // update on an empty stack behaves as push; pushes nest.
  Module m = testutil::module_from(R"(
func @f(%x: i64) -> i64 {
block ^entry:
  %c4 = const.i64 4
  intrinsic.update_context %c4
  %c9 = const.i64 9
  intrinsic.push_context %c9
  intrinsic.pop_context
  intrinsic.pop_context
  return %x
}
)");
  SpecializeStats stats;
  Module out = specialize(m, runtime_request(m, "f", "g"), {}, &stats);
  REQUIRE(validate(out).empty());
  CHECK(run(out, "g", {{3}}).value == 3);
}

TEST_CASE("specialize: value splits") {
  const char* split_text = R"(
func @f(%x: i64) -> i64 {
block ^entry:
  %lo = const.i64 LO
  %hi = const.i64 HI
  %s = intrinsic.specialized_value %x, %lo, %hi
  %ten = const.i64 10
  %r = imul %s, %ten
  return %r
}
)";
  auto with_bounds = [&](uint64_t lo, uint64_t hi) {
    std::string text = split_text;
    text.replace(text.find("LO"), 2, std::to_string(lo));
    text.replace(text.find("HI"), 2, std::to_string(hi));
    return testutil::module_from(text);
  };

  SUBCASE("two-arm split over [0,1]") {
    Module m = with_bounds(0, 1);
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    const Function& g = *out.find_function("g");
    CHECK(testutil::count_terms(g, TermKind::BrTable) == 1);
    CHECK(run(out, "g", {{0}}).value == 0);
    CHECK(run(out, "g", {{1}}).value == 10);
    // violated promise traps loudly
    ExecResult oob = run(out, "g", {{2}});
    CHECK(oob.trapped);
    CHECK(oob.trap_message.find("specialized_value") != std::string::npos);
  }
  SUBCASE("degenerate single-value range emits no runtime branch") {
    Module m = with_bounds(5, 5);
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    const Function& g = *out.find_function("g");
    CHECK(testutil::count_terms(g, TermKind::BrTable) == 0);
    CHECK(testutil::count_terms(g, TermKind::BrIf) == 0);
    CHECK(run(out, "g", {{5}}).value == 50);
  }
  SUBCASE("already-constant value splits without branching") {
    Module m = with_bounds(0, 7);
    SpecializationRequest req;
    req.target = "f";
    req.output_name = "g";
    req.arg_modes = {ArgMode::constant(3)};
    Module out = specialize(m, req);
    REQUIRE(validate(out).empty());
    const Function& g = *out.find_function("g");
    CHECK(testutil::count_terms(g, TermKind::BrTable) == 0);
    CHECK(run(out, "g", {{3}}).value == 30);
  }
  SUBCASE("constant value outside the range becomes a trap") {
    Module m = with_bounds(0, 3);
    SpecializationRequest req;
    req.target = "f";
    req.output_name = "g";
    req.arg_modes = {ArgMode::constant(12)};
    Module out = specialize(m, req);
    REQUIRE(validate(out).empty());
    CHECK(run(out, "g", {{12}}).trapped);
  }
  SUBCASE("range wider than the bound is an error") {
    Module m = with_bounds(0, 400);
    try {
      specialize(m, runtime_request(m, "f", "g"));
      FAIL("expected SplitRangeTooWide");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::SplitRangeTooWide);
    }
    SpecializeOptions wide;
    wide.value_split_bound = 401;
    Module out = specialize(m, runtime_request(m, "f", "g"), wide);
    CHECK(validate(out).empty());
    CHECK(run(out, "g", {{399}}).value == 3990);
  }
  SUBCASE("non-constant bounds are an error") {
    Module m = testutil::module_from(R"(
func @f(%x: i64, %b: i64) -> i64 {
block ^entry:
  %lo = const.i64 0
  %s = intrinsic.specialized_value %x, %lo, %b
  return %s
}
)");
    try {
      specialize(m, runtime_request(m, "f", "g"));
      FAIL("expected NonConstSplitBounds");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::NonConstSplitBounds);
    }
  }
}

TEST_CASE("specialize: register intrinsics virtualize to SSA") {
  SUBCASE("store then load forwards the value with zero memory ops") {
    Module m = testutil::module_from(R"(
func @f(%v: i64) -> i64 {
block ^entry:
  %i = const.i64 3
  intrinsic.store_register %i, %v
  %r = intrinsic.load_register %i
  return %r
}
)");
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    CHECK(count_memory_ops(*out.find_function("g")) == 0);
    CHECK(run(out, "g", {{42}}).value == 42);
    check_equivalent(m, runtime_request(m, "f", "h"), {{42}});
  }
  SUBCASE("never-stored register reads zero") {
    Module m = testutil::module_from(R"(
func @f() -> i64 {
block ^entry:
  %i = const.i64 7
  %r = intrinsic.load_register %i
  return %r
}
)");
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    CHECK(count_memory_ops(*out.find_function("g")) == 0);
    CHECK(run(out, "g", {}).value == 0);
  }
  SUBCASE("diverging stores meet at a join through a fresh block param") {
    Module m = testutil::module_from(R"(
func @f(%c: i64, %a: i64, %b: i64) -> i64 {
block ^entry:
  %i = const.i64 3
  %z = const.i64 0
  %nz = icmp.ne %c, %z
  br_if %nz, ^left, ^right
block ^left:
  intrinsic.store_register %i, %a
  br ^join
block ^right:
  intrinsic.store_register %i, %b
  br ^join
block ^join:
  %r = intrinsic.load_register %i
  return %r
}
)");
    SpecializeStats stats;
    Module out = specialize(m, runtime_request(m, "f", "g"), {}, &stats);
    REQUIRE(validate(out).empty());
    CHECK(stats.added_params >= 1);
    CHECK(run(out, "g", {{1, 10, 20}}).value == 10);
    CHECK(run(out, "g", {{0, 10, 20}}).value == 20);
    // one path stores, the other leaves the initial zero
    Module m2 = testutil::module_from(R"(
func @f(%c: i64, %a: i64) -> i64 {
block ^entry:
  %i = const.i64 3
  %z = const.i64 0
  %nz = icmp.ne %c, %z
  br_if %nz, ^left, ^right
block ^left:
  intrinsic.store_register %i, %a
  br ^join
block ^right:
  br ^join
block ^join:
  %r = intrinsic.load_register %i
  return %r
}
)");
    Module out2 = specialize(m2, runtime_request(m2, "f", "g"));
    REQUIRE(validate(out2).empty());
    CHECK(run(out2, "g", {{1, 9}}).value == 9);
    CHECK(run(out2, "g", {{0, 9}}).value == 0);
  }
  SUBCASE("non-constant register index is an error") {
    Module m = testutil::module_from(R"(
func @f(%i: i64) -> i64 {
block ^entry:
  %r = intrinsic.load_register %i
  return %r
}
)");
    try {
      specialize(m, runtime_request(m, "f", "g"));
      FAIL("expected NonConstRegisterIndex");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::NonConstRegisterIndex);
    }
  }
}

TEST_CASE("specialize: in-memory locals behave as a write-back cache") {
  SUBCASE("write plus flush emits exactly one store") {
    Module m = testutil::module_from(R"(
memory 64
func @f(%addr: i64, %v: i64) -> i64 {
block ^entry:
  %i = const.i64 0
  intrinsic.local_write %i, %addr, %v
  intrinsic.flush
  %r = intrinsic.local_read %i, %addr
  return %r
}
)");
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    const Function& g = *out.find_function("g");
    CHECK(testutil::count_ops(g, Opcode::Store64) == 1);
    CHECK(testutil::count_ops(g, Opcode::Load64) == 0);
    ExecResult r = run(out, "g", {{16, 77}});
    CHECK(r.value == 77);
    CHECK(r.final_memory[16] == 77);  // flushed to the canonical address
    check_equivalent(m, runtime_request(m, "f", "h"), {{16, 77}});
  }
  SUBCASE("cold read loads once and is cached thereafter") {
    Module m = testutil::module_from(R"(
memory 64
data 16 0500000000000000
func @f(%addr: i64) -> i64 {
block ^entry:
  %i = const.i64 0
  %a = intrinsic.local_read %i, %addr
  %b = intrinsic.local_read %i, %addr
  %s = iadd %a, %b
  return %s
}
)");
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    const Function& g = *out.find_function("g");
    CHECK(testutil::count_ops(g, Opcode::Load64) == 1);
    ExecResult r = run(out, "g", {{16}});
    CHECK(r.value == 10);
    CHECK(r.metrics.loads == 1);
  }
  SUBCASE("flush stores dirty locals in ascending index order") {
    Module m = testutil::module_from(R"(
memory 64
func @f(%a0: i64, %a1: i64, %v: i64) -> i64 {
block ^entry:
  %one = const.i64 1
  %zero = const.i64 0
  intrinsic.local_write %one, %a1, %v
  intrinsic.local_write %zero, %a0, %v
  intrinsic.flush
  return %v
}
)");
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    const Function& g = *out.find_function("g");
    std::vector<ValueId> store_addrs;
    for (const Block& b : g.blocks) {
      for (const Instruction& inst : b.insts) {
        if (inst.op == Opcode::Store64) store_addrs.push_back(inst.args[0]);
      }
    }
    REQUIRE(store_addrs.size() == 2);
    CHECK(store_addrs[0] == g.params[0]);  // local 0 first
    CHECK(store_addrs[1] == g.params[1]);
  }
  SUBCASE("non-constant local index is an error") {
    Module m = testutil::module_from(R"(
func @f(%i: i64, %addr: i64) -> i64 {
block ^entry:
  %r = intrinsic.local_read %i, %addr
  return %r
}
)");
    CHECK_THROWS_AS(specialize(m, runtime_request(m, "f", "g")), SpecializeError);
  }
}

TEST_CASE("specialize: virtual operand stack") {
  SUBCASE("push then pop forwards the value with no memory traffic") {
    Module m = testutil::module_from(R"(
memory 64
func @f(%addr: i64, %v: i64) -> i64 {
block ^entry:
  intrinsic.stack_push %addr, %v
  %r = intrinsic.stack_pop %addr
  return %r
}
)");
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    CHECK(count_memory_ops(*out.find_function("g")) == 0);
    CHECK(run(out, "g", {{16, 5}}).value == 5);
  }
  SUBCASE("pop from an empty virtual stack falls back to a true load") {
    Module m = testutil::module_from(R"(
memory 64
data 16 0900000000000000
func @f(%addr: i64) -> i64 {
block ^entry:
  %r = intrinsic.stack_pop %addr
  return %r
}
)");
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    CHECK(testutil::count_ops(*out.find_function("g"), Opcode::Load64) == 1);
    CHECK(run(out, "g", {{16}}).value == 9);
  }
  SUBCASE("stack_read and stack_write address virtual slots by depth") {
    Module m = testutil::module_from(R"(
memory 64
func @f(%a1: i64, %a2: i64, %v1: i64, %v2: i64) -> i64 {
block ^entry:
  intrinsic.stack_push %a1, %v1
  intrinsic.stack_push %a2, %v2
  %zero = const.i64 0
  %one = const.i64 1
  %top = intrinsic.stack_read %zero, %a2
  %below = intrinsic.stack_read %one, %a1
  intrinsic.stack_write %one, %a1, %top
  %r = intrinsic.stack_pop %a2
  %r2 = intrinsic.stack_pop %a1
  %d = isub %r2, %below
  %s = iadd %r, %d
  return %s
}
)");
    Module out = specialize(m, runtime_request(m, "f", "g"));
    REQUIRE(validate(out).empty());
    CHECK(count_memory_ops(*out.find_function("g")) == 0);
    // top=v2, below=v1, slot1 := v2, pop -> v2, pop -> v2; v2 + (v2 - v1)
    CHECK(run(out, "g", {{16, 24, 3, 11}}).value == 11 + (11 - 3));
  }
  SUBCASE("mismatched stack depths at a merge invalidate and flush on the edges") {
    Module m = testutil::module_from(R"(
memory 64
func @f(%c: i64, %a1: i64, %a2: i64, %v: i64) -> i64 {
block ^entry:
  %z = const.i64 0
  %nz = icmp.ne %c, %z
  intrinsic.stack_push %a1, %v
  br_if %nz, ^left, ^right
block ^left:
  intrinsic.stack_push %a2, %v
  br ^join
block ^right:
  br ^join
block ^join:
  %r = intrinsic.stack_pop %a2
  return %r
}
)");
    check_equivalent(m, runtime_request(m, "f", "g"), {{1, 16, 24, 7}});
    check_equivalent(m, runtime_request(m, "f", "g"), {{0, 16, 24, 7}});
    // entries were flushed on the edge: memory holds the pushed value
    Module out = specialize(m, runtime_request(m, "f", "h"));
    ExecResult r = run(out, "h", {{1, 16, 24, 7}});
    CHECK(r.value == 7);
    CHECK(r.final_memory[16] == 7);
    CHECK(r.final_memory[24] == 7);
  }
}

TEST_CASE("specialize: merge widening re-emits folded values as instructions") {
  // The short edge reaches the join first with a constant; the long edge
  // arrives after the join was already built, forcing a rebuild that
  // replaces the folded result with a real instruction.
  Module m = testutil::module_from(R"(
func @f(%c: i64) -> i64 {
block ^entry:
  %z = const.i64 0
  %nz = icmp.ne %c, %z
  %two = const.i64 2
  br_if %nz, ^join(%two), ^b
block ^b:
  %three = const.i64 3
  br ^join(%three)
block ^join(%p: i64):
  %r = imul %p, %p
  return %r
}
)");
  SpecializeStats stats;
  Module out = specialize(m, runtime_request(m, "f", "g"), {}, &stats);
  REQUIRE(validate(out).empty());
  // rebuilds exclude the empty prologue; a revisit pushes the count past
  // the remaining block total
  CHECK(stats.rebuilds >= stats.blocks);
  const Function& g = *out.find_function("g");
  CHECK(testutil::count_ops(g, Opcode::Imul) == 1);  // not folded
  CHECK(run(out, "g", {{1}}).value == 4);
  CHECK(run(out, "g", {{0}}).value == 9);
}

TEST_CASE("specialize: agreeing const edges do not force revisits") {
  Module m = testutil::module_from(R"(
func @f(%c: i64) -> i64 {
block ^entry:
  %z = const.i64 0
  %nz = icmp.ne %c, %z
  %five = const.i64 5
  br_if %nz, ^join(%five), ^b
block ^b:
  %cinq = const.i64 5
  br ^join(%cinq)
block ^join(%p: i64):
  %r = imul %p, %p
  return %r
}
)");
  SpecializeStats stats;
  Module out = specialize(m, runtime_request(m, "f", "g"), {}, &stats);
  REQUIRE(validate(out).empty());
  CHECK(stats.rebuilds == stats.blocks - 1);  // one build per block, minus prologue
  CHECK(testutil::count_ops(*out.find_function("g"), Opcode::Imul) == 0);  // folded to 25
  CHECK(run(out, "g", {{1}}).value == 25);
}

TEST_CASE("ssa repair: single-context diamond adds no params or cut points") {
  Module m = testutil::module_from(R"(
func @f(%c: i32, %x: i64) -> i64 {
block ^entry:
  %y = iadd %x, %x
  br_if %c, ^a, ^b
block ^a:
  br ^join
block ^b:
  br ^join
block ^join:
  %r = imul %y, %y
  return %r
}
)");
  SpecializeStats stats;
  Module out = specialize(m, runtime_request(m, "f", "g"), {}, &stats);
  REQUIRE(validate(out).empty());
  CHECK(stats.added_params == 0);
  CHECK(stats.cut_points == 0);
}

TEST_CASE("ssa repair: naive mode threads every live value as a param") {
  SpecializeOptions naive;
  naive.repair = SsaRepairMode::Naive;

  SUBCASE("straight-line function is unchanged") {
    Module m = testutil::module_from(R"(
func @f(%x: i64) -> i64 {
block ^entry:
  %y = iadd %x, %x
  return %y
}
)");
    SpecializeStats stats;
    Module out = specialize(m, runtime_request(m, "f", "g"), naive, &stats);
    REQUIRE(validate(out).empty());
    CHECK(stats.added_params == 0);
  }
  SUBCASE("one live value across one edge becomes one param") {
    Module m = testutil::module_from(R"(
func @f(%x: i64) -> i64 {
block ^entry:
  %y = iadd %x, %x
  br ^next
block ^next:
  %r = imul %y, %y
  return %r
}
)");
    SpecializeStats stats;
    Module out = specialize(m, runtime_request(m, "f", "g"), naive, &stats);
    REQUIRE(validate(out).empty());
    CHECK(stats.added_params == 1);
    CHECK(run(out, "g", {{3}}).value == 36);
  }
}

TEST_CASE("ssa repair: hsca param count never exceeds naive") {
  std::vector<minvm::MinProgram> programs;
  programs.push_back(minvm::assemble(R"(
      LOAD_IMMEDIATE 7
      STORE_REG 3
      LOAD_IMMEDIATE 1
      STORE_REG 2
top:  ADD 1 2
      STORE_REG 1
      SUB 3 2
      STORE_REG 3
      JMPNZ top
      LOAD_REG 1
      PRINT
      HALT
)"));
  for (uint64_t seed = 100; seed < 110; seed++) {
    programs.push_back(minvm::generate_program(seed));
  }
  for (size_t pi = 0; pi < programs.size(); pi++) {
    const minvm::MinProgram& prog = programs[pi];
    Module m = minvm::build_min_module(prog);
    for (const char* variant : {"min_plain", "min_state"}) {
      CAPTURE(pi);
      CAPTURE(variant);
      SpecializationRequest req = minvm::make_request(variant, prog, "out");
      SpecializeOptions hsca, naive;
      naive.repair = SsaRepairMode::Naive;
      SpecializeStats hs, ns;
      Module a = specialize(m, req, hsca, &hs);
      Module b = specialize(m, req, naive, &ns);
      REQUIRE(validate(a).empty());
      REQUIRE(validate(b).empty());
      CHECK(hs.added_params <= ns.added_params);
      CHECK_FALSE(hs.naive_fallback);
      ExecResult ra = run(a, "out", {{minvm::kBytecodeBase, 1}}, {}, 1000000);
      ExecResult rb = run(b, "out", {{minvm::kBytecodeBase, 1}}, {}, 1000000);
      CHECK(testutil::same_observable(ra, rb));
    }
  }
}

TEST_CASE("polyfill: lowering rules") {
  SUBCASE("context intrinsics vanish, leaving the body otherwise intact") {
    Module m = testutil::module_from(R"(
func @f(%x: i64) -> i64 {
block ^entry:
  %c = const.i64 1
  intrinsic.push_context %c
  %y = iadd %x, %c
  intrinsic.update_context %y
  intrinsic.pop_context
  intrinsic.assert_const %c
  return %y
}
)");
    PolyfillResult poly = polyfill_intrinsics(m);
    REQUIRE(validate(poly.module).empty());
    const Function& f = *poly.module.find_function("f");
    CHECK(testutil::count_ops(f, Opcode::Intrinsic) == 0);
    CHECK(f.blocks[0].insts.size() == 2);  // const + iadd
    CHECK(run(poly.module, "f", {{4}}).value == 5);
  }
  SUBCASE("stack push/pop become store then load at the same address") {
    Module m = testutil::module_from(R"(
memory 64
func @f(%addr: i64, %v: i64) -> i64 {
block ^entry:
  intrinsic.stack_push %addr, %v
  %r = intrinsic.stack_pop %addr
  return %r
}
)");
    PolyfillResult poly = polyfill_intrinsics(m);
    REQUIRE(validate(poly.module).empty());
    const Function& f = *poly.module.find_function("f");
    REQUIRE(f.blocks[0].insts.size() == 2);
    CHECK(f.blocks[0].insts[0].op == Opcode::Store64);
    CHECK(f.blocks[0].insts[1].op == Opcode::Load64);
    CHECK(f.blocks[0].insts[0].args[0] == f.blocks[0].insts[1].args[0]);
    ExecResult r = run(poly.module, "f", {{16, 123}});
    CHECK(r.value == 123);
  }
  SUBCASE("registers land in a scratch region with masked indices") {
    Module m = testutil::module_from(R"(
memory 64
func @f(%v: i64) -> i64 {
block ^entry:
  %i = const.i64 259
  intrinsic.store_register %i, %v
  %j = const.i64 3
  %r = intrinsic.load_register %j
  return %r
}
)");
    PolyfillResult poly = polyfill_intrinsics(m);
    REQUIRE(validate(poly.module).empty());
    REQUIRE(poly.scratch_regions.size() == 1);
    CHECK(poly.scratch_regions[0].first == "f");
    CHECK(poly.module.memory.size == poly.scratch_regions[0].second.start + 2048);
    // index 259 masks to 3, so the load observes the store
    CHECK(run(poly.module, "f", {{55}}).value == 55);
  }
  SUBCASE("specialized_value passes its value through") {
    Module m = testutil::module_from(R"(
func @f(%x: i64) -> i64 {
block ^entry:
  %lo = const.i64 0
  %hi = const.i64 9
  %s = intrinsic.specialized_value %x, %lo, %hi
  return %s
}
)");
    PolyfillResult poly = polyfill_intrinsics(m);
    REQUIRE(validate(poly.module).empty());
    CHECK(run(poly.module, "f", {{6}}).value == 6);
  }
}

TEST_CASE("specialize: degeneration to a copy when contexts are pre-polyfilled") {
  // Polyfilling first erases every annotation; specialization then has a
  // single root context and reproduces the interpreter body.
  auto prog = minvm::assemble(std::string("  LOAD_IMMEDIATE 4\n  STORE_REG 1\n") +
                              "  LOAD_IMMEDIATE 1\n  STORE_REG 2\n" +
                              "loop: SUB 1 2\n  STORE_REG 1\n  JMPNZ loop\n  HALT\n");
  Module m = minvm::build_min_module(prog);
  PolyfillResult poly = polyfill_intrinsics(m);
  SpecializationRequest req = minvm::make_request("min_plain", prog, "degen");
  Module out = specialize(poly.module, req);
  REQUIRE(validate(out).empty());
  const Function& degen = *out.find_function("degen");
  const Function& original = *poly.module.find_function("min_plain");
  CHECK(testutil::instruction_multiset(degen) == testutil::instruction_multiset(original));
  CHECK(degen.blocks.size() == original.blocks.size());
  // it still reads the bytecode at runtime
  std::vector<WatchRange> w = {minvm::bytecode_watch(prog)};
  ExecResult r = run(out, "degen", {{minvm::kBytecodeBase, 0}}, w);
  CHECK_FALSE(r.trapped);
  CHECK(r.metrics.loads_in_range.at("bytecode") > 0);
}

TEST_CASE("specialize: erasure on a small Min program") {
  auto prog = minvm::assemble(std::string("  LOAD_IMMEDIATE 6\n  STORE_REG 1\n") +
                              "  LOAD_IMMEDIATE 1\n  STORE_REG 2\n" +
                              "loop: SUB 1 2\n  STORE_REG 1\n  JMPNZ loop\n  HALT\n");
  Module m = minvm::build_min_module(prog);
  std::vector<WatchRange> w = {minvm::bytecode_watch(prog)};
  for (const char* variant : {"min_plain", "min_state"}) {
    SpecializationRequest req = minvm::make_request(variant, prog, "out");
    Module out = specialize(m, req);
    REQUIRE(validate(out).empty());
    ExecResult r = run(out, "out", {{minvm::kBytecodeBase, 0}}, w);
    REQUIRE_FALSE(r.trapped);
    CHECK(r.metrics.loads_in_range.at("bytecode") == 0);
  }
}

TEST_CASE("specialize: arbitrary context constants stay semantics-preserving") {
  auto prog = minvm::assemble(std::string("  LOAD_IMMEDIATE 0\n  STORE_REG 0\n") +
                              "  LOAD_IMMEDIATE 1\n  STORE_REG 2\n" +
                              "  LOAD_IMMEDIATE 5\n  STORE_REG 1\n" +
                              "loop: ADD 0 1\n  STORE_REG 0\n  SUB 1 2\n  STORE_REG 1\n" +
                              "  JMPNZ loop\n  LOAD_REG 0\n  PRINT\n  HALT\n");
  Module m = minvm::build_min_module(prog);
  PolyfillResult poly = polyfill_intrinsics(m);
  ExecResult expect = run(poly.module, "min_plain", {{minvm::kBytecodeBase, 0}});

  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 8; trial++) {
    Module fuzzed = m;
    testutil::randomize_update_contexts(*fuzzed.find_function("min_plain"), rng);
    REQUIRE(validate(fuzzed).empty());
    SpecializationRequest req = minvm::make_request("min_plain", prog, "out");
    Module out = specialize(fuzzed, req);
    REQUIRE(validate(out).empty());
    ExecResult got = run(out, "out", {{minvm::kBytecodeBase, 0}});
    CHECK(testutil::same_observable(expect, got));
  }
}

TEST_CASE("specialize: deterministic output") {
  auto prog = minvm::assemble("  LOAD_IMMEDIATE 3\n  STORE_REG 1\n  LOAD_IMMEDIATE 1\n"
                              "  STORE_REG 2\nloop: SUB 1 2\n  STORE_REG 1\n  JMPNZ loop\n"
                              "  HALT\n");
  Module m = minvm::build_min_module(prog);
  SpecializationRequest req = minvm::make_request("min_state", prog, "out");
  Module a = specialize(m, req);
  Module b = specialize(m, req);
  CHECK(print_module(a) == print_module(b));
}

TEST_CASE("specialize: configurable ceilings turn divergence into errors") {
  auto prog = minvm::assemble("  LOAD_IMMEDIATE 9\n  STORE_REG 1\n  LOAD_IMMEDIATE 1\n"
                              "  STORE_REG 2\nloop: SUB 1 2\n  STORE_REG 1\n  JMPNZ loop\n"
                              "  HALT\n");
  Module m = minvm::build_min_module(prog);
  SpecializationRequest req = minvm::make_request("min_plain", prog, "out");

  SUBCASE("context ceiling") {
    SpecializeOptions opts;
    opts.max_contexts = 3;
    try {
      specialize(m, req, opts);
      FAIL("expected ContextCeiling");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::ContextCeiling);
    }
  }
  SUBCASE("rebuild ceiling names the hot block") {
    SpecializeOptions opts;
    opts.max_rebuilds_per_block = 1;
    try {
      specialize(m, req, opts);
      FAIL("expected RebuildCeiling");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::RebuildCeiling);
      CHECK(e.location.find("block ^") != std::string::npos);
    }
  }
  SUBCASE("unbounded context growth errors instead of diverging") {
    // push_context on every iteration with no pop: each backedge reaches
    // the header under a strictly deeper context
    Module diverging = testutil::module_from(R"(
func @push_loop(%n: i64) -> i64 {
block ^entry:
  %one = const.i64 1
  br ^loop(%n)
block ^loop(%i: i64):
  intrinsic.push_context %one
  %i2 = isub %i, %one
  %z = const.i64 0
  %nz = icmp.ne %i2, %z
  br_if %nz, ^loop(%i2), ^done
block ^done:
  return %i2
}
)");
    SpecializeOptions opts;
    opts.max_contexts = 50;
    try {
      specialize(diverging, runtime_request(diverging, "push_loop", "out"), opts);
      FAIL("expected ContextCeiling");
    } catch (const SpecializeError& e) {
      CHECK(e.kind == SpecializeError::Kind::ContextCeiling);
    }
  }
}

TEST_CASE("specialize: request validation") {
  Module m = testutil::module_from("func @f(%x: i64) -> i64 {\nblock ^e:\n  return %x\n}\n");
  SUBCASE("unknown target") {
    SpecializationRequest req{"nope", "out", {}};
    CHECK_THROWS_AS(specialize(m, req), SpecializeError);
  }
  SUBCASE("arg mode count mismatch") {
    SpecializationRequest req{"f", "out", {}};
    CHECK_THROWS_AS(specialize(m, req), SpecializeError);
  }
  SUBCASE("memory promise out of bounds") {
    SpecializationRequest req{"f", "out", {ArgMode::memory(0, 4096)}};
    CHECK_THROWS_AS(specialize(m, req), SpecializeError);
  }
  SUBCASE("output name collision") {
    SpecializationRequest req{"f", "f", {ArgMode::runtime()}};
    CHECK_THROWS_AS(specialize(m, req), SpecializeError);
  }
}

TEST_CASE("specialize: irreducible control flow is legal end to end") {
  // a <-> b loop with two distinct entries
  Module m = testutil::module_from(R"(
func @irr(%c: i32, %n: i64) -> i64 {
block ^entry:
  br_if %c, ^a(%n), ^b(%n)
block ^a(%x: i64):
  %one = const.i64 1
  %x1 = isub %x, %one
  %z = const.i64 0
  %nz = icmp.ne %x1, %z
  br_if %nz, ^b(%x1), ^done(%x1)
block ^b(%y: i64):
  %uno = const.i64 1
  %y1 = isub %y, %uno
  %z2 = const.i64 0
  %nz2 = icmp.ne %y1, %z2
  br_if %nz2, ^a(%y1), ^done(%y1)
block ^done(%r: i64):
  return %r
}
)");
  CHECK(validate(m).empty());
  for (uint64_t c : {uint64_t(0), uint64_t(1)}) {
    check_equivalent(m, runtime_request(m, "irr", "irr_c"), {{c, 9}});
  }
}

TEST_CASE("specialize: all-runtime specialization of generated modules is equivalent") {
  for (uint64_t seed = 0; seed < 30; seed++) {
    CAPTURE(seed);
    Module m = testutil::random_module(seed);
    const Function& f = m.functions[0];
    std::vector<uint64_t> args;
    for (ValueId p : f.params) {
      args.push_back(f.value_type(p) == ScalarType::I32 ? 3 : 1000);
    }
    ExecResult expect = run(m, f.name, args, {}, 200000);
    for (SsaRepairMode mode : {SsaRepairMode::Hsca, SsaRepairMode::Naive}) {
      SpecializeOptions opts;
      opts.repair = mode;
      Module out = specialize(m, runtime_request(m, f.name, "spec_out"), opts);
      REQUIRE(validate(out).empty());
      ExecResult got = run(out, "spec_out", args, {}, 200000);
      CHECK(testutil::same_observable(expect, got));
      if (!expect.trapped && !got.trapped) {
        CHECK(testutil::same_memory_outside(expect.final_memory, got.final_memory, {}));
      }
    }
  }
}

TEST_CASE("specialize: calls are emitted as-is and registers survive them") {
  Module m = testutil::module_from(R"(
memory 64
func @touch(%a: i64) -> i64 {
block ^entry:
  %two = const.i64 2
  %r = imul %a, %two
  return %r
}
func @f(%v: i64) -> i64 {
block ^entry:
  %i = const.i64 1
  intrinsic.store_register %i, %v
  %d = call @touch(%v)
  %r = intrinsic.load_register %i
  %s = iadd %r, %d
  return %s
}
)");
  Module out = specialize(m, runtime_request(m, "f", "g"));
  REQUIRE(validate(out).empty());
  const Function& g = *out.find_function("g");
  CHECK(testutil::count_ops(g, Opcode::Call) == 1);
  CHECK(run(out, "g", {{10}}).value == 30);
  check_equivalent(m, runtime_request(m, "f", "h"), {{10}});
}
