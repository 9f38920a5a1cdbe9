// Structural regularizers over the final super-node features: Laplacian
// smoothness along super edges, edge-reconstruction BCE from an MLP over
// concatenated pair features, and their weighted combination.
#pragma once

#include <utility>
#include <vector>

#include "gpit/aggregator.hpp"
#include "gpit/geometry.hpp"
#include "gpit/param_store.hpp"
#include "gpit/rng.hpp"
#include "gpit/tape.hpp"

namespace gpit {

struct LossConfig {
  double lambda_g = 1.0;
  double lambda_r = 1.0;
};

struct LossReport {
  double smooth = 0.0;
  double rel = 0.0;
  double graph_total = 0.0;  // lambda_g * smooth + lambda_r * rel
  double fm = 0.0;
  double grand_total = 0.0;
};

// Mean over unordered pairs i<j of A_ij * ||h_i - h_j||^2; 0 when N = 1.
Var smoothness_loss(Tape& tape, Var h_super, const BinMat& a_super);

// All unordered pairs (i, j) with i < j.
std::vector<std::pair<int, int>> all_pairs(int n);

// Deterministic subsample of the unordered pairs; k >= count returns all.
std::vector<std::pair<int, int>> sample_pairs(int n, int k, Rng& rng);

// Registers MLP_edge (2D -> hidden -> 1 logit) under "loss.edge.".
void init_edge_mlp_params(ParamStore& store, int dim, Rng& rng);
MlpVars bind_edge_mlp(Tape& tape, ParamStore& store);

// One logit per listed pair: MLP_edge([h_i; h_j]).
Var edge_logits(Tape& tape, Var h_super, const std::vector<std::pair<int, int>>& pairs,
                const MlpVars& edge_mlp);

// Mean binary cross-entropy of the pair logits against A_ij labels.
Var relational_loss(Tape& tape, Var logits, const BinMat& a_super,
                    const std::vector<std::pair<int, int>>& pairs);

Var total_graph_loss(Tape& tape, Var smooth, Var rel, const LossConfig& cfg);

}  // namespace gpit
