// Exercises the installed binary end to end: exit codes, file outputs, and
// the pipeline wiring. Each invocation goes through std::system.
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"

namespace {

struct CommandResult {
  int exit_code;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  std::string out_path = std::string(TEST_TMP_DIR) + "/cli_out.txt";
  std::string cmd = std::string(PEVAL_BIN) + " " + args + " > " + out_path + " 2>&1";
  int status = std::system(cmd.c_str());
  CommandResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_path);
  std::ostringstream os;
  os << in.rdbuf();
  result.output = os.str();
  return result;
}

std::string tmp_file(const std::string& name, const std::string& contents) {
  std::string path = std::string(TEST_TMP_DIR) + "/" + name;
  std::ofstream(path) << contents;
  return path;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const std::string kInterp = std::string(PROGRAMS_DIR) + "/min_interpreter.ir";
const std::string kSum10 = std::string(PROGRAMS_DIR) + "/sum10.min";

}  // namespace

TEST_CASE("cli: validate exit codes") {
  CHECK(run_cli("validate " + kInterp).exit_code == 0);

  std::string bad = tmp_file("bad.ir", R"(
func @f(%c: i32) -> i64 {
block ^entry:
  br_if %c, ^a, ^b
block ^a:
  %x = const.i64 1
  br ^join
block ^b:
  br ^join
block ^join:
  return %x
}
)");
  CommandResult r = run_cli("validate " + bad);
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("not dominated") != std::string::npos);

  CHECK(run_cli("validate /nonexistent/file.ir").exit_code == 2);
}

TEST_CASE("cli: asm emits stable bytes") {
  std::string out1 = std::string(TEST_TMP_DIR) + "/sum10.bin";
  std::string out2 = std::string(TEST_TMP_DIR) + "/sum10b.bin";
  REQUIRE(run_cli("asm " + kSum10 + " -o " + out1).exit_code == 0);
  REQUIRE(run_cli("asm " + kSum10 + " -o " + out2).exit_code == 0);
  std::string bytes = read_all(out1);
  CHECK(bytes.size() % 8 == 0);
  CHECK(bytes == read_all(out2));

  std::string broken = tmp_file("broken.min", "  JMP nowhere\n  HALT\n");
  CHECK(run_cli("asm " + broken + " -o /dev/null").exit_code == 1);
}

TEST_CASE("cli: specialize + run pipeline") {
  // assemble, build a request against the shipped interpreter, specialize,
  // then run with a watch over the bytecode image
  std::string bin = std::string(TEST_TMP_DIR) + "/sum10.bin";
  REQUIRE(run_cli("asm " + kSum10 + " -o " + bin).exit_code == 0);
  size_t words = read_all(bin).size() / 8;

  // the interpreter module ships without a program; compose one
  std::string interp_text = read_all(kInterp);
  std::ostringstream composed;
  composed << "memory " << (4096 + 8 * words) << "\ndata 4096 ";
  std::string bytes = read_all(bin);
  static const char* hex = "0123456789abcdef";
  for (unsigned char b : bytes) {
    composed << hex[b >> 4] << hex[b & 0xf];
  }
  composed << "\n" << interp_text.substr(interp_text.find("\nfunc") + 1);
  std::string module_path = tmp_file("sum10_module.ir", composed.str());

  std::string requests = tmp_file("sum10.req",
                                  "target min_plain\n"
                                  "output sum10_compiled\n"
                                  "arg 0 memory 4096 " + std::to_string(8 * words) + "\n"
                                  "arg 1 runtime\n");
  std::string out_module = std::string(TEST_TMP_DIR) + "/sum10_spec.ir";
  CommandResult spec = run_cli("specialize " + module_path + " " + requests + " -o " +
                               out_module + " -v");
  CHECK(spec.exit_code == 0);
  CHECK(read_all(out_module + ".map").find("sum10_compiled") != std::string::npos);

  CommandResult ran = run_cli("run " + out_module + " sum10_compiled 4096 0 --watch bytecode=4096:" +
                              std::to_string(8 * words));
  CHECK(ran.exit_code == 0);
  CHECK(ran.output.find("print 55") != std::string::npos);
  CHECK(ran.output.find("outcome: return 55") != std::string::npos);
  CHECK(ran.output.find("watch bytecode: loads=0") != std::string::npos);

  // request naming a missing function
  std::string bad_req = tmp_file("bad.req", "target nope\noutput x\n");
  CHECK(run_cli("specialize " + module_path + " " + bad_req + " -o /dev/null").exit_code == 1);
}

TEST_CASE("cli: run exit codes") {
  std::string mod = tmp_file("spin.ir", R"(
func @spin(%n: i64) -> i64 {
block ^entry:
  %one = const.i64 1
  br ^loop(%n)
block ^loop(%i: i64):
  %i2 = isub %i, %one
  %z = const.i64 0
  %nz = icmp.ne %i2, %z
  br_if %nz, ^loop(%i2), ^done
block ^done:
  return %i2
}
)");
  CommandResult starved = run_cli("run " + mod + " spin 1000000 --fuel 10");
  CHECK(starved.exit_code == 3);
  CHECK(starved.output.find("out of fuel") != std::string::npos);

  CHECK(run_cli("run " + mod + " spin").exit_code == 2);        // wrong arg count
  CHECK(run_cli("run " + mod + " spin 1 2").exit_code == 2);    // wrong arg count
  CHECK(run_cli("run " + mod + " nosuch 1").exit_code == 2);    // unknown function
  CHECK(run_cli("frobnicate").exit_code == 2);                  // unknown subcommand
}

TEST_CASE("cli: bench smoke") {
  CommandResult r = run_cli("bench " + kInterp + " " + kSum10);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("interp-plain") != std::string::npos);
  CHECK(r.output.find("specialized-state") != std::string::npos);
  CHECK(r.output.find("config,insts") != std::string::npos);
}

TEST_CASE("cli: fuzz runs clean and the fault hook trips it") {
  CommandResult ok = run_cli("fuzz --cases 4 --seed 7");
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("4 cases passed") != std::string::npos);

  CommandResult broken = run_cli("fuzz --cases 4 --seed 7 --break-transfer");
  CHECK(broken.exit_code == 1);
  CHECK(broken.output.find("divergence") != std::string::npos);
  CHECK(broken.output.find("seed") != std::string::npos);
}
