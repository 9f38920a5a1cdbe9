// Two-tiered graph assembly: per-part token grids become sub-nodes, their
// means become super-nodes, star edges tie each super-node to its sub-nodes,
// and sub-nodes of one part are fully connected for intra-part smoothing.
#pragma once

#include <utility>
#include <vector>

#include "gpit/geometry.hpp"
#include "gpit/tensor.hpp"

namespace gpit {

// A d x D token matrix standing in for one part's IP+ embedding.
struct TokenGrid {
  int part_id = 0;
  Tensor tokens;
};

struct HierGraph {
  int n_parts = 0;
  int tokens_per_part = 0;  // d
  int feat_dim = 0;         // D

  // Stacked initial features: N super rows (per-part token means) followed by
  // N*d sub rows in part order.
  Tensor x0;

  BinMat a_super;                                  // N x N, symmetric, zero diagonal
  std::vector<std::pair<int, int>> e_super;        // i < j super edges
  std::vector<std::pair<int, int>> e_sub;          // (super, global sub index), N*d entries
  std::vector<std::pair<int, int>> intra_part_edges;  // global sub index pairs, k < m
  std::vector<int> sub_owner;                      // global sub index -> super index

  MatX<double> super_block() const { return x0.mat().topRows(n_parts); }
  MatX<double> sub_block() const {
    return x0.mat().bottomRows(static_cast<Index>(n_parts) * tokens_per_part);
  }
};

HierGraph assemble_hier_graph(const std::vector<TokenGrid>& tokens, const BinMat& a_super);

}  // namespace gpit
