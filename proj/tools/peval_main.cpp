// Command-line driver: validate | specialize | run | bench | asm | fuzz.
//
// Exit codes: 0 success, 1 semantic/transform error, 2 usage or I/O error,
// 3 runtime trap.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "peval/absint.hpp"
#include "peval/exec.hpp"
#include "peval/minvm.hpp"
#include "peval/parse.hpp"
#include "peval/print.hpp"
#include "peval/specialize.hpp"
#include "peval/validate.hpp"
#include "peval/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSemantic = 1;
constexpr int kExitUsage = 2;
constexpr int kExitTrap = 3;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(contents.data(), std::streamsize(contents.size()));
}

peval::Module load_module(const std::string& path) {
  return peval::parse_module(read_file(path));
}

peval::minvm::MinProgram load_program(const std::string& path) {
  std::string data = read_file(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".min") {
    return peval::minvm::assemble(data);
  }
  if (data.size() % 8 != 0) {
    throw IoError(path + ": binary program size must be a multiple of 8");
  }
  peval::minvm::MinProgram program;
  for (size_t i = 0; i < data.size(); i += 8) {
    uint64_t w = 0;
    for (int k = 0; k < 8; k++) w |= uint64_t(uint8_t(data[i + k])) << (8 * k);
    program.words.push_back(w);
  }
  return program;
}

int ensure_valid(const peval::Module& m) {
  auto diags = peval::validate(m);
  if (diags.empty()) return kExitOk;
  std::cerr << peval::format_diagnostics(diags);
  return kExitSemantic;
}

bool parse_watch(const std::string& spec, peval::WatchRange& out) {
  size_t eq = spec.find('=');
  size_t colon = spec.find(':', eq == std::string::npos ? 0 : eq);
  if (eq == std::string::npos || colon == std::string::npos) return false;
  try {
    out.label = spec.substr(0, eq);
    out.start = std::stoull(spec.substr(eq + 1, colon - eq - 1), nullptr, 0);
    out.len = std::stoull(spec.substr(colon + 1), nullptr, 0);
  } catch (...) {
    return false;
  }
  return !out.label.empty();
}

int cmd_validate(const std::string& module_path) {
  peval::Module m = load_module(module_path);
  return ensure_valid(m);
}

int cmd_specialize(const std::string& module_path, const std::string& request_path,
                   const std::string& out_path, const std::string& map_path,
                   const peval::SpecializeOptions& opts, bool verbose) {
  peval::Module m = load_module(module_path);
  if (int rc = ensure_valid(m); rc != kExitOk) return rc;
  auto requests = peval::parse_requests(read_file(request_path));
  if (requests.empty()) {
    std::cerr << request_path << ": no requests\n";
    return kExitSemantic;
  }

  nlohmann::json mapping = nlohmann::json::array();
  for (size_t i = 0; i < requests.size(); i++) {
    peval::SpecializeStats stats;
    m = peval::specialize(m, requests[i], opts, &stats);
    mapping.push_back({{"request", i},
                       {"target", requests[i].target},
                       {"function", requests[i].output_name}});
    if (verbose) {
      std::cerr << requests[i].output_name << ": " << stats.contexts << " contexts, "
                << stats.blocks << " blocks, " << stats.rebuilds << " rebuilds, "
                << stats.added_params << " repair params"
                << (stats.naive_fallback ? " (naive fallback)" : "") << "\n";
    }
  }
  if (int rc = ensure_valid(m); rc != kExitOk) {
    std::cerr << "internal error: specialized module does not validate\n";
    return rc;
  }
  write_file(out_path, peval::print_module(m));
  write_file(map_path.empty() ? out_path + ".map" : map_path, mapping.dump(2) + "\n");
  return kExitOk;
}

int cmd_run(const std::string& module_path, const std::string& func,
            const std::vector<std::string>& arg_strings,
            const std::vector<std::string>& watch_specs, uint64_t fuel) {
  peval::Module m = load_module(module_path);
  if (int rc = ensure_valid(m); rc != kExitOk) return rc;

  std::vector<uint64_t> args;
  for (const std::string& s : arg_strings) {
    try {
      args.push_back(std::stoull(s, nullptr, 0));
    } catch (...) {
      std::cerr << "bad argument '" << s << "'\n";
      return kExitUsage;
    }
  }
  std::vector<peval::WatchRange> watches;
  for (const std::string& spec : watch_specs) {
    peval::WatchRange w;
    if (!parse_watch(spec, w)) {
      std::cerr << "bad watch spec '" << spec << "' (want name=start:len)\n";
      return kExitUsage;
    }
    watches.push_back(std::move(w));
  }

  peval::ExecResult result;
  try {
    result = peval::run(m, func, args, watches, fuel);
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  for (uint64_t p : result.metrics.prints) std::cout << "print " << p << "\n";
  if (result.trapped) {
    std::cout << "outcome: trap \"" << result.trap_message << "\"\n";
  } else if (result.has_value) {
    std::cout << "outcome: return " << result.value << "\n";
  } else {
    std::cout << "outcome: return\n";
  }
  std::cout << "insts " << result.metrics.insts_executed << "\nloads "
            << result.metrics.loads << "\nstores " << result.metrics.stores
            << "\nbranches " << result.metrics.branches << "\n";
  for (const auto& [label, count] : result.metrics.loads_in_range) {
    std::cout << "watch " << label << ": loads=" << count
              << " stores=" << result.metrics.stores_in_range.at(label) << "\n";
  }
  return result.trapped ? kExitTrap : kExitOk;
}

int cmd_bench(const std::string& module_path, const std::string& program_path,
              uint64_t input, uint64_t fuel) {
  peval::Module m = load_module(module_path);
  if (int rc = ensure_valid(m); rc != kExitOk) return rc;
  peval::minvm::MinProgram program = load_program(program_path);
  std::vector<std::string> configs = {"interp-plain", "interp-state", "specialized-plain",
                                      "specialized-state"};
  peval::minvm::BenchReport report =
      peval::minvm::bench_on(m, program, configs, input, fuel);
  std::cout << report.format_table() << "\n" << report.format_csv();
  return kExitOk;
}

int cmd_asm(const std::string& program_path, const std::string& out_path) {
  peval::minvm::MinProgram program = peval::minvm::assemble(read_file(program_path));
  std::string bytes;
  bytes.reserve(program.words.size() * 8);
  for (uint64_t w : program.words) {
    for (int i = 0; i < 8; i++) bytes.push_back(char(uint8_t(w >> (8 * i))));
  }
  write_file(out_path, bytes);
  return kExitOk;
}

struct FuzzFailure {
  std::string detail;
};

bool results_agree(const peval::ExecResult& a, const peval::ExecResult& b) {
  if (a.trapped != b.trapped) return false;
  if (a.trapped) return a.trap_message == b.trap_message;
  if (a.value != b.value) return false;
  return a.metrics.prints == b.metrics.prints;
}

int cmd_fuzz(uint64_t cases, uint64_t seed, bool break_transfer) {
  if (break_transfer) peval::set_transfer_fault_for_testing(true);

  const std::vector<std::string> variants = {"min_plain", "min_state"};
  const std::vector<uint64_t> inputs = {0, 3};
  const uint64_t fuel = 5'000'000;

  for (uint64_t i = 0; i < cases; i++) {
    std::mt19937_64 mix(seed);
    mix.discard(i % 1024);
    uint64_t case_seed = mix() ^ (i * 0x9e3779b97f4a7c15ull);
    peval::minvm::MinProgram program = peval::minvm::generate_program(case_seed);
    auto report = [&](const std::string& stage, const std::string& detail) {
      std::cout << "fuzz: divergence in case " << i << " (seed " << case_seed << ", "
                << stage << ")\n"
                << detail << "\nprogram words:";
      for (uint64_t w : program.words) std::cout << ' ' << w;
      std::cout << "\n";
      return kExitSemantic;
    };

    try {
      peval::Module base = peval::minvm::build_min_module(program);
      peval::PolyfillResult polyfilled = peval::polyfill_intrinsics(base);

      for (const std::string& variant : variants) {
        std::vector<peval::ExecResult> baselines;
        for (uint64_t input : inputs) {
          baselines.push_back(peval::run(polyfilled.module, variant,
                                         {{peval::minvm::kBytecodeBase, input}}, {}, fuel));
        }
        for (peval::SsaRepairMode mode :
             {peval::SsaRepairMode::Hsca, peval::SsaRepairMode::Naive}) {
          peval::SpecializationRequest req =
              peval::minvm::make_request(variant, program, variant + "_c");
          peval::SpecializeOptions opts;
          opts.repair = mode;
          peval::Module specialized = peval::specialize(base, req, opts);
          for (size_t k = 0; k < inputs.size(); k++) {
            peval::ExecResult got =
                peval::run(specialized, req.output_name,
                           {{peval::minvm::kBytecodeBase, inputs[k]}}, {}, fuel);
            if (!results_agree(baselines[k], got)) {
              return report(variant + (mode == peval::SsaRepairMode::Hsca ? "/hsca" : "/naive") +
                                "/input=" + std::to_string(inputs[k]),
                            "interpreter and specialized results differ");
            }
          }
        }
      }
    } catch (const std::exception& e) {
      return report("exception", e.what());
    }
  }
  std::cout << "fuzz: " << cases << " cases passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"partial evaluator for a small SSA CFG IR"};
  app.set_version_flag("--version", peval::kVersion);
  app.require_subcommand(1);

  // validate
  std::string module_path, request_path, out_path, map_path, func, program_path;
  auto* validate = app.add_subcommand("validate", "parse and validate a module");
  validate->add_option("module", module_path)->required();

  // specialize
  peval::SpecializeOptions spec_opts;
  std::string repair = "hsca";
  bool verbose = false;
  auto* specialize = app.add_subcommand("specialize", "apply specialization requests");
  specialize->add_option("module", module_path)->required();
  specialize->add_option("requests", request_path)->required();
  specialize->add_option("-o,--output", out_path)->required();
  specialize->add_option("--map", map_path, "sidecar request-to-function map path");
  specialize->add_option("--ssa-repair", repair)->check(CLI::IsMember({"hsca", "naive"}));
  specialize->add_option("--max-contexts", spec_opts.max_contexts);
  specialize->add_option("--max-rebuilds", spec_opts.max_rebuilds_per_block);
  specialize->add_option("--value-split-bound", spec_opts.value_split_bound);
  specialize->add_flag("-v,--verbose", verbose);

  // run
  std::vector<std::string> run_args, watch_specs;
  uint64_t fuel = peval::kDefaultFuel;
  auto* run_cmd = app.add_subcommand("run", "execute a function in the oracle");
  run_cmd->add_option("module", module_path)->required();
  run_cmd->add_option("function", func)->required();
  run_cmd->add_option("args", run_args, "function arguments (u64)");
  run_cmd->add_option("--watch", watch_specs, "labeled range name=start:len");
  run_cmd->add_option("--fuel", fuel);

  // bench
  uint64_t bench_input = 0;
  auto* bench_cmd = app.add_subcommand("bench", "compare execution strategies");
  bench_cmd->add_option("module", module_path)->required();
  bench_cmd->add_option("program", program_path)->required();
  bench_cmd->add_option("--input", bench_input);
  bench_cmd->add_option("--fuel", fuel);

  // asm
  auto* asm_cmd = app.add_subcommand("asm", "assemble a Min program to a word image");
  asm_cmd->add_option("program", program_path)->required();
  asm_cmd->add_option("-o,--output", out_path)->required();

  // fuzz
  uint64_t cases = 100, seed = 1;
  bool break_transfer = false;
  auto* fuzz_cmd = app.add_subcommand("fuzz", "differential fuzz of the whole pipeline");
  fuzz_cmd->add_option("--cases", cases);
  fuzz_cmd->add_option("--seed", seed);
  fuzz_cmd->add_flag("--break-transfer", break_transfer,
                     "inject a constant-folding fault (harness self-check)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help/--version
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (validate->parsed()) return cmd_validate(module_path);
    if (specialize->parsed()) {
      spec_opts.repair =
          repair == "naive" ? peval::SsaRepairMode::Naive : peval::SsaRepairMode::Hsca;
      return cmd_specialize(module_path, request_path, out_path, map_path, spec_opts,
                            verbose);
    }
    if (run_cmd->parsed()) return cmd_run(module_path, func, run_args, watch_specs, fuel);
    if (bench_cmd->parsed()) return cmd_bench(module_path, program_path, bench_input, fuel);
    if (asm_cmd->parsed()) return cmd_asm(program_path, out_path);
    if (fuzz_cmd->parsed()) return cmd_fuzz(cases, seed, break_transfer);
  } catch (const IoError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const peval::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitSemantic;
  } catch (const peval::SpecializeError& e) {
    std::cerr << e.what() << "\n";
    return kExitSemantic;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitSemantic;
  }
  return kExitUsage;
}
