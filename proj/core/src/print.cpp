#include "peval/print.hpp"

#include <sstream>

namespace peval {

namespace {

void print_value(std::ostream& os, const Function& f, ValueId v) {
  os << '%' << f.value_name(v);
}

void print_edge(std::ostream& os, const Function& f, const Edge& e) {
  os << '^' << f.blocks[e.target].label;
  if (!e.args.empty()) {
    os << '(';
    for (size_t i = 0; i < e.args.size(); i++) {
      if (i) os << ", ";
      print_value(os, f, e.args[i]);
    }
    os << ')';
  }
}

void print_instruction(std::ostream& os, const Function& f, const Instruction& inst) {
  os << "  ";
  if (inst.result != kNoValue) {
    print_value(os, f, inst.result);
    os << " = ";
  }
  switch (inst.op) {
    case Opcode::ConstI64:
    case Opcode::ConstI32:
      os << opcode_info(inst.op).name << ' ' << inst.imm;
      break;
    case Opcode::Call: {
      os << "call @" << inst.callee << '(';
      for (size_t i = 0; i < inst.args.size(); i++) {
        if (i) os << ", ";
        print_value(os, f, inst.args[i]);
      }
      os << ')';
      break;
    }
    case Opcode::Intrinsic: {
      os << "intrinsic." << intrinsic_info(inst.intrinsic).name;
      for (size_t i = 0; i < inst.args.size(); i++) {
        os << (i ? ", " : " ");
        print_value(os, f, inst.args[i]);
      }
      break;
    }
    default: {
      os << opcode_info(inst.op).name;
      for (size_t i = 0; i < inst.args.size(); i++) {
        os << (i ? ", " : " ");
        print_value(os, f, inst.args[i]);
      }
      break;
    }
  }
  os << '\n';
}

void print_terminator(std::ostream& os, const Function& f, const Terminator& t) {
  os << "  ";
  switch (t.kind) {
    case TermKind::Br:
      os << "br ";
      print_edge(os, f, t.edges[0]);
      break;
    case TermKind::BrIf:
      os << "br_if ";
      print_value(os, f, t.value);
      os << ", ";
      print_edge(os, f, t.edges[0]);
      os << ", ";
      print_edge(os, f, t.edges[1]);
      break;
    case TermKind::BrTable: {
      os << "br_table ";
      print_value(os, f, t.value);
      os << ", [";
      for (size_t i = 0; i + 1 < t.edges.size(); i++) {
        if (i) os << ", ";
        print_edge(os, f, t.edges[i]);
      }
      os << "], ";
      print_edge(os, f, t.edges.back());
      break;
    }
    case TermKind::Return:
      os << "return";
      if (t.value != kNoValue) {
        os << ' ';
        print_value(os, f, t.value);
      }
      break;
    case TermKind::Trap: {
      os << "trap \"";
      for (char c : t.message) {
        if (c == '"' || c == '\\') os << '\\';
        if (c == '\n') {
          os << "\\n";
        } else {
          os << c;
        }
      }
      os << '"';
      break;
    }
  }
  os << '\n';
}

void print_function_impl(std::ostream& os, const Function& f) {
  os << "func @" << f.name << '(';
  for (size_t i = 0; i < f.params.size(); i++) {
    if (i) os << ", ";
    print_value(os, f, f.params[i]);
    os << ": " << to_string(f.value_type(f.params[i]));
  }
  os << ')';
  if (f.result) os << " -> " << to_string(*f.result);
  os << " {\n";
  for (const Block& b : f.blocks) {
    os << "block ^" << b.label;
    if (!b.params.empty()) {
      os << '(';
      for (size_t i = 0; i < b.params.size(); i++) {
        if (i) os << ", ";
        print_value(os, f, b.params[i]);
        os << ": " << to_string(f.value_type(b.params[i]));
      }
      os << ')';
    }
    os << ":\n";
    for (const Instruction& inst : b.insts) print_instruction(os, f, inst);
    print_terminator(os, f, b.term);
  }
  os << "}\n";
}

}  // namespace

std::string print_function(const Function& f) {
  std::ostringstream os;
  print_function_impl(os, f);
  return os.str();
}

std::string print_module(const Module& m) {
  std::ostringstream os;
  os << "memory " << m.memory.size << '\n';
  for (const Segment& seg : m.memory.segments) {
    os << "data " << seg.offset << ' ';
    static const char* hex = "0123456789abcdef";
    for (uint8_t b : seg.bytes) {
      os << hex[b >> 4] << hex[b & 0xf];
    }
    os << '\n';
  }
  if (!m.entry.empty()) os << "entry @" << m.entry << '\n';
  for (const Function& f : m.functions) {
    os << '\n';
    print_function_impl(os, f);
  }
  return os.str();
}

}  // namespace peval
