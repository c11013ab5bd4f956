// Regenerates programs/min_interpreter.ir from the builders so the shipped
// file and build_min_interpreter stay in sync.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "peval/minvm.hpp"
#include "peval/print.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: peval-genmin <output.ir>\n");
    return 2;
  }
  peval::Module m = peval::minvm::build_min_module(peval::minvm::MinProgram{});
  std::ofstream out(argv[1], std::ios::binary);
  if (!out) {
    std::fprintf(stderr, "cannot write %s\n", argv[1]);
    return 2;
  }
  out << peval::print_module(m);
  return 0;
}
