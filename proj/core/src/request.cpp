#include <sstream>

#include "peval/parse.hpp"
#include "peval/specialize.hpp"

namespace peval {

std::vector<SpecializationRequest> parse_requests(std::string_view text) {
  std::vector<SpecializationRequest> out;
  SpecializationRequest cur;
  std::vector<bool> seen;
  bool open = false;
  int lineno = 0;

  auto flush = [&](int line) {
    if (!open) return;
    if (cur.output_name.empty()) {
      throw ParseError(line, 1, "request for " + cur.target + " lacks an output line");
    }
    for (size_t i = 0; i < seen.size(); i++) {
      if (!seen[i]) {
        throw ParseError(line, 1,
                         "request for " + cur.target + " lacks an arg line for parameter " +
                             std::to_string(i));
      }
    }
    out.push_back(std::move(cur));
    cur = {};
    seen.clear();
    open = false;
  };

  std::istringstream stream{std::string(text)};
  std::string line;
  while (std::getline(stream, line)) {
    lineno++;
    size_t cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.resize(cut);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;

    if (word == "target") {
      flush(lineno);
      if (!(ls >> cur.target)) throw ParseError(lineno, 1, "target needs a function name");
      open = true;
    } else if (word == "output") {
      if (!open) throw ParseError(lineno, 1, "output before target");
      if (!(ls >> cur.output_name)) throw ParseError(lineno, 1, "output needs a name");
    } else if (word == "arg") {
      if (!open) throw ParseError(lineno, 1, "arg before target");
      size_t index;
      std::string mode;
      if (!(ls >> index >> mode)) throw ParseError(lineno, 1, "malformed arg line");
      if (cur.arg_modes.size() <= index) {
        cur.arg_modes.resize(index + 1);
        seen.resize(index + 1, false);
      }
      if (seen[index]) throw ParseError(lineno, 1, "duplicate arg line for parameter " +
                                                       std::to_string(index));
      seen[index] = true;
      if (mode == "runtime") {
        cur.arg_modes[index] = ArgMode::runtime();
      } else if (mode == "const") {
        uint64_t v;
        if (!(ls >> v)) throw ParseError(lineno, 1, "arg const needs a value");
        cur.arg_modes[index] = ArgMode::constant(v);
      } else if (mode == "memory") {
        uint64_t addr, len;
        if (!(ls >> addr >> len)) throw ParseError(lineno, 1, "arg memory needs addr and len");
        cur.arg_modes[index] = ArgMode::memory(addr, len);
      } else {
        throw ParseError(lineno, 1, "unknown arg mode '" + mode + "'");
      }
    } else {
      throw ParseError(lineno, 1, "unknown request keyword '" + word + "'");
    }
  }
  flush(lineno);
  return out;
}

}  // namespace peval
