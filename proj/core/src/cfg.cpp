#include "peval/cfg.hpp"

#include <algorithm>
#include <cassert>

namespace peval {

std::vector<std::vector<uint32_t>> block_successors(const Function& f) {
  std::vector<std::vector<uint32_t>> succs(f.blocks.size());
  for (size_t i = 0; i < f.blocks.size(); i++) {
    for (const Edge& e : f.blocks[i].term.edges) succs[i].push_back(e.target);
  }
  return succs;
}

// Cooper-Harvey-Kennedy iterative algorithm.
Dominators::Dominators(const std::vector<std::vector<uint32_t>>& succs, uint32_t entry) {
  size_t n = succs.size();
  idom_.assign(n, kNoBlock);
  depth_.assign(n, 0);
  rpo_index_.assign(n, kNoBlock);
  if (n == 0) return;

  // Postorder DFS from entry.
  std::vector<uint32_t> post;
  post.reserve(n);
  std::vector<uint8_t> state(n, 0);
  std::vector<std::pair<uint32_t, size_t>> stack;
  stack.emplace_back(entry, 0);
  state[entry] = 1;
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < succs[node].size()) {
      uint32_t s = succs[node][idx++];
      if (!state[s]) {
        state[s] = 1;
        stack.emplace_back(s, 0);
      }
    } else {
      post.push_back(node);
      stack.pop_back();
    }
  }
  rpo_.assign(post.rbegin(), post.rend());
  for (size_t i = 0; i < rpo_.size(); i++) rpo_index_[rpo_[i]] = uint32_t(i);

  std::vector<std::vector<uint32_t>> preds(n);
  for (uint32_t b = 0; b < n; b++) {
    if (rpo_index_[b] == kNoBlock) continue;
    for (uint32_t s : succs[b]) preds[s].push_back(b);
  }

  auto intersect = [&](uint32_t a, uint32_t b) {
    while (a != b) {
      while (rpo_index_[a] > rpo_index_[b]) a = idom_[a];
      while (rpo_index_[b] > rpo_index_[a]) b = idom_[b];
    }
    return a;
  };

  idom_[entry] = entry;
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t b : rpo_) {
      if (b == entry) continue;
      uint32_t new_idom = kNoBlock;
      for (uint32_t p : preds[b]) {
        if (idom_[p] == kNoBlock) continue;
        new_idom = (new_idom == kNoBlock) ? p : intersect(p, new_idom);
      }
      if (new_idom != kNoBlock && idom_[b] != new_idom) {
        idom_[b] = new_idom;
        changed = true;
      }
    }
  }

  for (uint32_t b : rpo_) {
    depth_[b] = (b == entry) ? 0 : depth_[idom_[b]] + 1;
  }
}

bool Dominators::dominates(uint32_t a, uint32_t b) const {
  if (idom_[a] == kNoBlock || idom_[b] == kNoBlock) return false;
  while (depth_[b] > depth_[a]) b = idom_[b];
  return a == b;
}

uint32_t Dominators::lca(uint32_t a, uint32_t b) const {
  assert(reachable(a) && reachable(b));
  while (a != b) {
    if (depth_[a] > depth_[b]) {
      a = idom_[a];
    } else if (depth_[b] > depth_[a]) {
      b = idom_[b];
    } else {
      a = idom_[a];
      b = idom_[b];
    }
  }
  return a;
}

std::vector<std::vector<uint32_t>> Dominators::frontiers(
    const std::vector<std::vector<uint32_t>>& succs) const {
  size_t n = succs.size();
  std::vector<std::vector<uint32_t>> preds(n);
  for (uint32_t b = 0; b < n; b++) {
    if (!reachable(b)) continue;
    for (uint32_t s : succs[b]) preds[s].push_back(b);
  }
  std::vector<std::vector<uint32_t>> df(n);
  for (uint32_t b = 0; b < n; b++) {
    if (!reachable(b) || preds[b].size() < 2) continue;
    for (uint32_t p : preds[b]) {
      uint32_t runner = p;
      while (runner != idom_[b] && reachable(runner)) {
        df[runner].push_back(b);
        if (runner == idom_[runner]) break;  // entry
        runner = idom_[runner];
      }
    }
  }
  for (auto& v : df) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return df;
}

}  // namespace peval
