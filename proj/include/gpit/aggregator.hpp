// Hierarchical graph aggregator: per-layer GAT over super-nodes, GCN over
// intra-part sub-nodes, gated top-down / bottom-up message passing between the
// tiers, and residual LayerNorm updates. The refined sub-node matrix is the
// condition handed to the generative prior.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gpit/hier_graph.hpp"
#include "gpit/param_store.hpp"
#include "gpit/rng.hpp"
#include "gpit/tape.hpp"

namespace gpit {

struct AggregatorConfig {
  int layers = 2;  // L
  int dim = 32;    // D
  double leaky_slope = 0.2;
  double ln_eps = 1e-5;

  int mlp_hidden() const { return dim / 2 > 0 ? dim / 2 : 1; }
};

// One hidden ReLU layer, scalar output per row.
struct MlpVars {
  Var w1, b1, w2, b2;
};

Var mlp_forward(Tape& tape, Var x, const MlpVars& mlp);

struct AggregatorLayerVars {
  Var gat_w;  // D x D
  Var gat_a;  // 1 x 2D attention vector
  Var gcn_w;  // D x D
  MlpVars sc;  // super -> sub gate
  MlpVars cs;  // sub -> super gate
  Var ln_super_gain, ln_super_bias;
  Var ln_sub_gain, ln_sub_bias;
};

struct AggregatorVars {
  AggregatorConfig cfg;
  std::vector<AggregatorLayerVars> layers;
};

// Registers all learned weights under the "aggregator." prefix.
void init_aggregator_params(ParamStore& store, const AggregatorConfig& cfg, Rng& rng);
AggregatorVars bind_aggregator(Tape& tape, ParamStore& store, const AggregatorConfig& cfg);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init shared by all modules.
Tensor uniform_init(Index rows, Index cols, Index fan_in, Rng& rng, int rank = 2);

// Single-head GAT with self-loops over the super-node graph.
Var gat_super_layer(Tape& tape, Var h_super, const std::vector<std::pair<int, int>>& e_super,
                    Var w, Var attn, double leaky_slope);

// Symmetric-normalised GCN with self-loops over intra-part sub-node edges.
Var gcn_sub_layer(Tape& tape, Var h_sub, const std::vector<std::pair<int, int>>& intra_edges,
                  const std::vector<int>& sub_owner, Var w);

// h_sub'' = h_sub' + sigmoid(MLP_sc([h_super'; h_sub'])) * h_super'
Var top_down_update(Tape& tape, Var h_super_p, Var h_sub_p, const std::vector<int>& sub_owner,
                    const MlpVars& sc);

// h_super'' = (1/d) * sum_k sigmoid(MLP_cs([h_sub'; h_super'])) * h_sub'
Var bottom_up_update(Tape& tape, Var h_sub_p, Var h_super_p, const std::vector<int>& sub_owner,
                     int tokens_per_part, const MlpVars& cs);

// LayerNorm(h'' + h_prev) with the block's own gain/bias.
Var layer_finalize(Tape& tape, Var h_acc, Var h_prev, Var gain, Var bias, double eps);

struct AggregateOut {
  Var h_sub;    // (N*d) x D refined sub-node features, H' = H^{sub(L)}
  Var h_super;  // N x D final super features, inputs to the structural losses
};

AggregateOut aggregate_forward(Tape& tape, const HierGraph& g, const AggregatorVars& vars);

// Convenience forward without gradient tracking (evaluation / sampling).
struct AggregateValues {
  MatX<double> h_sub;
  MatX<double> h_super;
};
AggregateValues aggregate_forward_values(const HierGraph& g, ParamStore& store,
                                         const AggregatorConfig& cfg);

}  // namespace gpit
