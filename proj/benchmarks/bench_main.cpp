#include <benchmark/benchmark.h>

#include <fstream>
#include <sstream>

#include "peval/exec.hpp"
#include "peval/minvm.hpp"
#include "peval/parse.hpp"
#include "peval/print.hpp"
#include "peval/specialize.hpp"
#include "peval/validate.hpp"

using namespace peval;
using namespace peval::minvm;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

MinProgram sum_program(uint64_t n) {
  return assemble("  LOAD_IMMEDIATE 0\n  STORE_REG 0\n  LOAD_IMMEDIATE 1\n  STORE_REG 2\n"
                  "  LOAD_IMMEDIATE " + std::to_string(n) + "\n  STORE_REG 1\n"
                  "loop: ADD 0 1\n  STORE_REG 0\n  SUB 1 2\n  STORE_REG 1\n  JMPNZ loop\n"
                  "  LOAD_REG 0\n  PRINT\n  HALT\n");
}

const std::string& interpreter_text() {
  static const std::string text = read_file(std::string(PROGRAMS_DIR) + "/min_interpreter.ir");
  return text;
}

}  // namespace

static void BM_ParseMinInterpreter(benchmark::State& state) {
  for (auto _ : state) {
    Module m = parse_module(interpreter_text());
    benchmark::DoNotOptimize(m.functions.size());
  }
}
BENCHMARK(BM_ParseMinInterpreter);

static void BM_ValidateMinInterpreter(benchmark::State& state) {
  Module m = parse_module(interpreter_text());
  for (auto _ : state) {
    auto diags = validate(m);
    benchmark::DoNotOptimize(diags.size());
  }
}
BENCHMARK(BM_ValidateMinInterpreter);

static void BM_PrintMinInterpreter(benchmark::State& state) {
  Module m = parse_module(interpreter_text());
  for (auto _ : state) {
    std::string text = print_module(m);
    benchmark::DoNotOptimize(text.size());
  }
}
BENCHMARK(BM_PrintMinInterpreter);

static void BM_SpecializeSum(benchmark::State& state) {
  MinProgram prog = sum_program(uint64_t(state.range(0)));
  Module m = build_min_module(prog);
  SpecializationRequest req = make_request("min_state", prog, "compiled");
  for (auto _ : state) {
    Module out = specialize(m, req);
    benchmark::DoNotOptimize(out.functions.size());
  }
}
BENCHMARK(BM_SpecializeSum)->Arg(10)->Arg(1000);

static void BM_InterpretSum(benchmark::State& state) {
  MinProgram prog = sum_program(uint64_t(state.range(0)));
  Module m = build_min_module(prog);
  PolyfillResult poly = polyfill_intrinsics(m);
  for (auto _ : state) {
    ExecResult r = run(poly.module, "min_plain", {{kBytecodeBase, 0}});
    benchmark::DoNotOptimize(r.value);
  }
}
BENCHMARK(BM_InterpretSum)->Arg(1000)->Arg(100000);

static void BM_RunSpecializedSum(benchmark::State& state) {
  MinProgram prog = sum_program(uint64_t(state.range(0)));
  Module m = build_min_module(prog);
  SpecializationRequest req = make_request("min_state", prog, "compiled");
  Module out = specialize(m, req);
  for (auto _ : state) {
    ExecResult r = run(out, "compiled", {{kBytecodeBase, 0}});
    benchmark::DoNotOptimize(r.value);
  }
}
BENCHMARK(BM_RunSpecializedSum)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
