// Graph utilities shared by the validator, the specializer's SSA repair,
// and tests: successor extraction, iterative dominators, dominance
// frontiers, and dominator-tree LCA.
#pragma once

#include <cstdint>
#include <vector>

#include "peval/ir.hpp"

namespace peval {

inline constexpr uint32_t kNoBlock = ~uint32_t(0);

std::vector<std::vector<uint32_t>> block_successors(const Function& f);

// Immediate dominators over an explicit successor list, entry node 0 (or
// `entry`). Unreachable nodes get idom == kNoBlock. idom[entry] == entry.
class Dominators {
 public:
  Dominators(const std::vector<std::vector<uint32_t>>& succs, uint32_t entry = 0);

  bool reachable(uint32_t b) const { return idom_[b] != kNoBlock; }
  uint32_t idom(uint32_t b) const { return idom_[b]; }
  // a dominates b (reflexive). False if either node is unreachable.
  bool dominates(uint32_t a, uint32_t b) const;
  // Lowest common ancestor in the dominator tree.
  uint32_t lca(uint32_t a, uint32_t b) const;
  // Dominance frontier per node.
  std::vector<std::vector<uint32_t>> frontiers(
      const std::vector<std::vector<uint32_t>>& succs) const;
  // Blocks in reverse postorder (reachable only).
  const std::vector<uint32_t>& rpo() const { return rpo_; }

 private:
  std::vector<uint32_t> idom_;
  std::vector<uint32_t> depth_;
  std::vector<uint32_t> rpo_;
  std::vector<uint32_t> rpo_index_;
};

}  // namespace peval
