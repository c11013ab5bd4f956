#include "peval/parse.hpp"

#include <cctype>
#include <map>
#include <optional>

namespace peval {

namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
}

// Line-oriented tokenizer. Comments run from ';' to end of line, except
// inside a quoted string.
struct Cursor {
  std::string_view text;
  size_t pos = 0;
  int line = 1;
  int col = 1;

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line, col, msg); }

  bool eof() const { return pos >= text.size(); }
  char peek() const { return eof() ? '\0' : text[pos]; }

  void advance() {
    if (eof()) return;
    if (text[pos] == '\n') {
      line++;
      col = 1;
    } else {
      col++;
    }
    pos++;
  }

  void skip_space_in_line() {
    while (!eof()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\r') {
        advance();
      } else if (c == ';') {
        while (!eof() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  void skip_blank_lines() {
    for (;;) {
      skip_space_in_line();
      if (!eof() && peek() == '\n') {
        advance();
      } else {
        break;
      }
    }
  }

  bool at_line_end() {
    skip_space_in_line();
    return eof() || peek() == '\n';
  }

  void expect_line_end() {
    if (!at_line_end()) fail("trailing characters on line");
    if (!eof()) advance();
  }

  bool try_consume(char c) {
    skip_space_in_line();
    if (peek() == c) {
      advance();
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!try_consume(c)) fail(std::string("expected '") + c + "'");
  }

  std::string ident() {
    skip_space_in_line();
    if (!is_ident_char(peek())) fail("expected identifier");
    std::string out;
    while (!eof() && is_ident_char(peek())) {
      out.push_back(peek());
      advance();
    }
    return out;
  }

  std::string sigil_ident(char sigil, const char* what) {
    skip_space_in_line();
    if (peek() != sigil) fail(std::string("expected ") + what);
    advance();
    return ident();
  }

  std::optional<std::string> try_sigil_ident(char sigil) {
    skip_space_in_line();
    if (peek() != sigil) return std::nullopt;
    advance();
    return ident();
  }

  uint64_t number() {
    skip_space_in_line();
    bool neg = false;
    if (peek() == '-') {
      neg = true;
      advance();
    }
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected number");
    uint64_t v = 0;
    if (peek() == '0' && pos + 1 < text.size() &&
        (text[pos + 1] == 'x' || text[pos + 1] == 'X')) {
      advance();
      advance();
      if (!std::isxdigit(static_cast<unsigned char>(peek()))) fail("expected hex digits");
      while (!eof() && std::isxdigit(static_cast<unsigned char>(peek()))) {
        char c = peek();
        uint64_t d = std::isdigit(static_cast<unsigned char>(c))
                         ? uint64_t(c - '0')
                         : uint64_t(std::tolower(c) - 'a' + 10);
        v = v * 16 + d;
        advance();
      }
    } else {
      while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
        v = v * 10 + uint64_t(peek() - '0');
        advance();
      }
    }
    return neg ? uint64_t(0) - v : v;
  }

  std::string quoted_string() {
    skip_space_in_line();
    if (peek() != '"') fail("expected quoted string");
    advance();
    std::string out;
    while (!eof() && peek() != '"' && peek() != '\n') {
      if (peek() == '\\') {
        advance();
        char c = peek();
        if (c == 'n')
          out.push_back('\n');
        else
          out.push_back(c);
        advance();
      } else {
        out.push_back(peek());
        advance();
      }
    }
    if (peek() != '"') fail("unterminated string");
    advance();
    return out;
  }
};

ScalarType parse_type(Cursor& c) {
  std::string t = c.ident();
  if (t == "i32") return ScalarType::I32;
  if (t == "i64") return ScalarType::I64;
  c.fail("unknown type '" + t + "' (expected i32 or i64)");
}

struct FunctionParser {
  Cursor& c;
  Function fn;
  std::map<std::string, ValueId, std::less<>> value_ids;
  // first-use location of values not yet defined
  std::map<std::string, std::pair<int, int>> pending_uses;
  std::map<std::string, std::vector<std::pair<uint32_t, std::pair<int, int>>>>
      label_refs;  // label -> list of (edge slot resolved later)
  std::map<std::string, uint32_t, std::less<>> block_ids;

  explicit FunctionParser(Cursor& cursor) : c(cursor) {}

  ValueId def_value(const std::string& name, ScalarType type) {
    auto [it, inserted] = value_ids.try_emplace(name, ValueId(fn.values.size()));
    if (!inserted) {
      // Forward uses create the slot before the definition; a second
      // definition of the same name is an error.
      if (!pending_uses.count(name)) c.fail("duplicate definition of %" + name);
      pending_uses.erase(name);
      fn.values[it->second].type = type;
      return it->second;
    }
    fn.values.push_back(ValueInfo{name, type});
    return it->second;
  }

  ValueId use_value(const std::string& name) {
    auto [it, inserted] = value_ids.try_emplace(name, ValueId(fn.values.size()));
    if (inserted) {
      fn.values.push_back(ValueInfo{name, ScalarType::I64});
      pending_uses.emplace(name, std::pair{c.line, c.col});
    }
    return it->second;
  }

  void parse_instruction_line(Block& b) {
    // Either "%x = <op> ..." or "<op> ..."
    ValueId result = kNoValue;
    std::string result_name;
    c.skip_space_in_line();
    if (c.peek() == '%') {
      result_name = c.sigil_ident('%', "value");
      c.expect('=');
    }
    std::string op_name = c.ident();

    if (op_name == "call" || (op_name.rfind("intrinsic.", 0) == 0)) {
      Instruction inst;
      if (op_name == "call") {
        inst.op = Opcode::Call;
        inst.callee = c.sigil_ident('@', "function name '@...'");
        c.expect('(');
        if (!c.try_consume(')')) {
          do {
            inst.args.push_back(use_value(c.sigil_ident('%', "value")));
          } while (c.try_consume(','));
          c.expect(')');
        }
      } else {
        inst.op = Opcode::Intrinsic;
        std::string intr_name = op_name.substr(10);
        auto intr = intrinsic_from_name(intr_name);
        if (!intr) c.fail("unknown intrinsic '" + intr_name + "'");
        inst.intrinsic = *intr;
        int want = intrinsic_info(*intr).num_args;
        for (int i = 0; i < want; i++) {
          if (i > 0) c.expect(',');
          inst.args.push_back(use_value(c.sigil_ident('%', "value")));
        }
      }
      if (!result_name.empty()) {
        // Calls take the callee's result type; resolved by the typing pass.
        inst.result = def_value(result_name, ScalarType::I64);
      }
      b.insts.push_back(std::move(inst));
      c.expect_line_end();
      return;
    }

    auto op = opcode_from_name(op_name);
    if (!op) c.fail("unknown opcode '" + op_name + "'");
    Instruction inst;
    inst.op = *op;
    const OpcodeInfo& info = opcode_info(*op);
    if (*op == Opcode::ConstI64 || *op == Opcode::ConstI32) {
      inst.imm = c.number();
      if (*op == Opcode::ConstI32) inst.imm &= 0xffffffffu;
    } else {
      for (int i = 0; i < info.num_args; i++) {
        if (i > 0) c.expect(',');
        inst.args.push_back(use_value(c.sigil_ident('%', "value")));
      }
    }
    if (info.has_result) {
      if (result_name.empty()) c.fail(std::string(info.name) + " requires a result");
      // Result type resolved properly by the typing pass; seed with the
      // fixed-width cases so single-pass inputs mostly come out right.
      inst.result = def_value(result_name, ScalarType::I64);
    } else if (!result_name.empty()) {
      c.fail(std::string(info.name) + " produces no result");
    }
    b.insts.push_back(std::move(inst));
    c.expect_line_end();
  }

  bool parse_terminator_line(Block& b, const std::string& word) {
    Terminator t;
    if (word == "br") {
      t.kind = TermKind::Br;
      parse_edge_into(t);
    } else if (word == "br_if") {
      t.kind = TermKind::BrIf;
      t.value = use_value(c.sigil_ident('%', "value"));
      c.expect(',');
      parse_edge_into(t);
      c.expect(',');
      parse_edge_into(t);
    } else if (word == "br_table") {
      t.kind = TermKind::BrTable;
      t.value = use_value(c.sigil_ident('%', "value"));
      c.expect(',');
      c.expect('[');
      if (!c.try_consume(']')) {
        do {
          parse_edge_into(t);
        } while (c.try_consume(','));
        c.expect(']');
      }
      c.expect(',');
      parse_edge_into(t);  // default
    } else if (word == "return") {
      t.kind = TermKind::Return;
      if (!c.at_line_end()) t.value = use_value(c.sigil_ident('%', "value"));
    } else if (word == "trap") {
      t.kind = TermKind::Trap;
      t.message = c.quoted_string();
    } else {
      return false;
    }
    b.term = std::move(t);
    c.expect_line_end();
    return true;
  }

  // Edges with unresolved labels are remembered and patched once all block
  // labels are known.
  struct EdgeFixup {
    uint32_t block;
    size_t edge_index;
    std::string label;
    int line, col;
  };
  std::vector<EdgeFixup> fixups;

  void parse_edge_into(Terminator& t) {
    Edge e;
    std::string label = c.sigil_ident('^', "block label '^...'");
    int line = c.line, col = c.col;
    auto it = block_ids.find(label);
    e.target = (it != block_ids.end()) ? it->second : ~uint32_t(0);
    if (e.target == ~uint32_t(0)) {
      fixups.push_back(EdgeFixup{uint32_t(fn.blocks.size() - 1), t.edges.size(), label,
                                 line, col});
    }
    if (c.try_consume('(')) {
      if (!c.try_consume(')')) {
        do {
          e.args.push_back(use_value(c.sigil_ident('%', "value")));
        } while (c.try_consume(','));
        c.expect(')');
      }
    }
    t.edges.push_back(std::move(e));
  }

  Function parse() {
    fn.name = c.sigil_ident('@', "function name '@...'");
    c.expect('(');
    if (!c.try_consume(')')) {
      do {
        std::string pname = c.sigil_ident('%', "parameter '%...'");
        c.expect(':');
        ScalarType pt = parse_type(c);
        fn.params.push_back(def_value(pname, pt));
      } while (c.try_consume(','));
      c.expect(')');
    }
    c.skip_space_in_line();
    if (c.peek() == '-') {
      c.advance();
      c.expect('>');
      fn.result = parse_type(c);
    }
    c.expect('{');
    c.expect_line_end();

    // blocks
    for (;;) {
      c.skip_blank_lines();
      if (c.try_consume('}')) {
        c.expect_line_end();
        break;
      }
      std::string word = c.ident();
      if (word == "block") {
        Block b;
        b.label = c.sigil_ident('^', "block label '^...'");
        if (block_ids.count(b.label)) c.fail("duplicate block label ^" + b.label);
        if (c.try_consume('(')) {
          if (!c.try_consume(')')) {
            do {
              std::string pname = c.sigil_ident('%', "block parameter");
              c.expect(':');
              ScalarType pt = parse_type(c);
              b.params.push_back(def_value(pname, pt));
            } while (c.try_consume(','));
            c.expect(')');
          }
        }
        c.expect(':');
        c.expect_line_end();
        block_ids.emplace(b.label, uint32_t(fn.blocks.size()));
        fn.blocks.push_back(std::move(b));

        // block body: instructions until a terminator line
        bool terminated = false;
        for (;;) {
          c.skip_blank_lines();
          if (c.eof()) c.fail("unexpected end of input in block");
          size_t save_pos = c.pos;
          int save_line = c.line, save_col = c.col;
          if (c.peek() == '}' ) {
            if (!terminated) c.fail("block ^" + fn.blocks.back().label + " lacks a terminator");
            break;
          }
          // Peek one word to see whether a new block or terminator starts.
          if (c.peek() == '%') {
            if (terminated) c.fail("instruction after terminator");
            parse_instruction_line(fn.blocks.back());
            continue;
          }
          std::string w = c.ident();
          if (w == "block") {
            // rewind; outer loop handles it
            c.pos = save_pos;
            c.line = save_line;
            c.col = save_col;
            if (!terminated) c.fail("block ^" + fn.blocks.back().label + " lacks a terminator");
            break;
          }
          if (terminated) c.fail("instruction after terminator");
          if (parse_terminator_line(fn.blocks.back(), w)) {
            terminated = true;
            continue;
          }
          // Not a terminator: an opcode line without result.
          c.pos = save_pos;
          c.line = save_line;
          c.col = save_col;
          parse_instruction_line(fn.blocks.back());
        }
        continue;
      }
      c.fail("expected 'block' or '}'");
    }

    if (fn.blocks.empty()) c.fail("function @" + fn.name + " has no blocks");

    for (const EdgeFixup& fx : fixups) {
      auto it = block_ids.find(fx.label);
      if (it == block_ids.end()) {
        throw ParseError(fx.line, fx.col, "branch to undefined label ^" + fx.label);
      }
      fn.blocks[fx.block].term.edges[fx.edge_index].target = it->second;
    }
    if (!pending_uses.empty()) {
      auto& [name, loc] = *pending_uses.begin();
      throw ParseError(loc.first, loc.second, "use of undefined value %" + name);
    }
    return std::move(fn);
  }
};

// Best-effort type inference; validate() re-derives types strictly and
// reports mismatches as diagnostics rather than parse errors.
void infer_types(Module& m) {
  for (Function& f : m.functions) {
    bool changed = true;
    int rounds = 0;
    while (changed && rounds++ < 64) {
      changed = false;
      for (Block& b : f.blocks) {
        for (Instruction& inst : b.insts) {
          if (inst.result == kNoValue) continue;
          ScalarType t = ScalarType::I64;
          if (inst.op == Opcode::Call) {
            const Function* callee = m.find_function(inst.callee);
            if (callee && callee->result) t = *callee->result;
          } else if (auto rt = result_type(f, inst)) {
            t = *rt;
          }
          if (f.values[inst.result].type != t) {
            f.values[inst.result].type = t;
            changed = true;
          }
        }
      }
    }
  }
}

}  // namespace

Module parse_module(std::string_view text) {
  Cursor c{text};
  Module m;
  for (;;) {
    c.skip_blank_lines();
    if (c.eof()) break;
    std::string word = c.ident();
    if (word == "memory") {
      m.memory.size = c.number();
      c.expect_line_end();
    } else if (word == "data") {
      Segment seg;
      seg.offset = c.number();
      c.skip_space_in_line();
      std::string hex;
      while (!c.eof() && std::isxdigit(static_cast<unsigned char>(c.peek()))) {
        hex.push_back(c.peek());
        c.advance();
      }
      if (hex.size() % 2 != 0) c.fail("data bytes need an even number of hex digits");
      for (size_t i = 0; i < hex.size(); i += 2) {
        auto nib = [&](char ch) -> uint8_t {
          if (ch >= '0' && ch <= '9') return uint8_t(ch - '0');
          return uint8_t(std::tolower(ch) - 'a' + 10);
        };
        seg.bytes.push_back(uint8_t(nib(hex[i]) << 4 | nib(hex[i + 1])));
      }
      m.memory.segments.push_back(std::move(seg));
      c.expect_line_end();
    } else if (word == "entry") {
      m.entry = c.sigil_ident('@', "function name '@...'");
      c.expect_line_end();
    } else if (word == "func") {
      FunctionParser fp(c);
      Function f = fp.parse();
      for (const Function& existing : m.functions) {
        if (existing.name == f.name) c.fail("duplicate function @" + f.name);
      }
      m.functions.push_back(std::move(f));
    } else {
      c.fail("expected 'memory', 'data', 'entry', or 'func'");
    }
  }
  infer_types(m);
  return m;
}

}  // namespace peval
