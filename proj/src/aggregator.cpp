#include "gpit/aggregator.hpp"

#include <cmath>
#include <stdexcept>

namespace gpit {

Tensor uniform_init(Index rows, Index cols, Index fan_in, Rng& rng, int rank) {
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  MatX<double> m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-s, s);
  Tensor t = Tensor::from_rank(rank, rows, cols);
  t.mat() = m;
  return t;
}

namespace {

void init_mlp(ParamStore& store, const std::string& prefix, Index in, Index hidden, Rng& rng) {
  store.add(prefix + ".w1", uniform_init(in, hidden, in, rng));
  store.add(prefix + ".b1", uniform_init(1, hidden, in, rng, 1));
  store.add(prefix + ".w2", uniform_init(hidden, 1, hidden, rng));
  store.add(prefix + ".b2", uniform_init(1, 1, hidden, rng, 1));
}

MlpVars bind_mlp(Tape& tape, ParamStore& store, const std::string& prefix) {
  return MlpVars{store.bind(tape, prefix + ".w1"), store.bind(tape, prefix + ".b1"),
                 store.bind(tape, prefix + ".w2"), store.bind(tape, prefix + ".b2")};
}

std::string layer_prefix(int l) { return "aggregator.l" + std::to_string(l); }

}  // namespace

Var mlp_forward(Tape& tape, Var x, const MlpVars& mlp) {
  (void)tape;
  Var hidden = relu(add_rowvec(matmul(x, mlp.w1), mlp.b1));
  return add_rowvec(matmul(hidden, mlp.w2), mlp.b2);
}

void init_aggregator_params(ParamStore& store, const AggregatorConfig& cfg, Rng& rng) {
  const Index d = cfg.dim;
  const Index h = cfg.mlp_hidden();
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    store.add(p + ".gat.w", uniform_init(d, d, d, rng));
    store.add(p + ".gat.a", uniform_init(1, 2 * d, 2 * d, rng, 1));
    store.add(p + ".gcn.w", uniform_init(d, d, d, rng));
    init_mlp(store, p + ".sc", 2 * d, h, rng);
    init_mlp(store, p + ".cs", 2 * d, h, rng);
    store.add(p + ".ln_super.gain", Tensor::from_matrix(MatX<double>::Ones(1, d)));
    store.add(p + ".ln_super.bias", Tensor::zeros_vec(d));
    store.add(p + ".ln_sub.gain", Tensor::from_matrix(MatX<double>::Ones(1, d)));
    store.add(p + ".ln_sub.bias", Tensor::zeros_vec(d));
  }
}

AggregatorVars bind_aggregator(Tape& tape, ParamStore& store, const AggregatorConfig& cfg) {
  AggregatorVars vars;
  vars.cfg = cfg;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    AggregatorLayerVars lv;
    lv.gat_w = store.bind(tape, p + ".gat.w");
    lv.gat_a = store.bind(tape, p + ".gat.a");
    lv.gcn_w = store.bind(tape, p + ".gcn.w");
    lv.sc = bind_mlp(tape, store, p + ".sc");
    lv.cs = bind_mlp(tape, store, p + ".cs");
    lv.ln_super_gain = store.bind(tape, p + ".ln_super.gain");
    lv.ln_super_bias = store.bind(tape, p + ".ln_super.bias");
    lv.ln_sub_gain = store.bind(tape, p + ".ln_sub.gain");
    lv.ln_sub_bias = store.bind(tape, p + ".ln_sub.bias");
    vars.layers.push_back(lv);
  }
  return vars;
}

Var gat_super_layer(Tape& tape, Var h_super, const std::vector<std::pair<int, int>>& e_super,
                    Var w, Var attn, double leaky_slope) {
  const Index n = tape.value(h_super).rows();
  const Index dim = tape.value(h_super).cols();
  MatX<double> mask = MatX<double>::Identity(n, n);  // self-loops
  for (const auto& e : e_super) {
    if (e.first < 0 || e.first >= n || e.second < 0 || e.second >= n)
      throw std::invalid_argument("gat_super_layer: edge index out of range");
    mask(e.first, e.second) = 1.0;
    mask(e.second, e.first) = 1.0;
  }
  Var wh = matmul(h_super, w);  // row i holds W h_i
  Var a_col = transpose(attn);  // 2D x 1
  Var a_src = slice_rows(a_col, 0, dim);
  Var a_dst = slice_rows(a_col, dim, dim);
  Var score_src = matmul(wh, a_src);                       // N x 1, a_src . Wh_i
  Var score_dst = transpose(matmul(wh, a_dst));            // 1 x N
  Var scores = leaky_relu(outer_sum(score_src, score_dst), leaky_slope);
  Var alpha = masked_softmax_rows(scores, mask);
  return matmul(alpha, wh);
}

Var gcn_sub_layer(Tape& tape, Var h_sub, const std::vector<std::pair<int, int>>& intra_edges,
                  const std::vector<int>& sub_owner, Var w) {
  const Index n = tape.value(h_sub).rows();
  MatX<double> a_hat = MatX<double>::Identity(n, n);
  for (const auto& e : intra_edges) {
    if (e.first < 0 || e.first >= n || e.second < 0 || e.second >= n)
      throw std::invalid_argument("gcn_sub_layer: edge index out of range");
    if (sub_owner[static_cast<size_t>(e.first)] != sub_owner[static_cast<size_t>(e.second)])
      throw std::invalid_argument("gcn_sub_layer: cross-part sub edge");
    a_hat(e.first, e.second) = 1.0;
    a_hat(e.second, e.first) = 1.0;
  }
  MatX<double> dinv = MatX<double>::Zero(n, n);
  for (Index i = 0; i < n; ++i) dinv(i, i) = 1.0 / std::sqrt(a_hat.row(i).sum());
  MatX<double> s_norm = dinv * a_hat * dinv;
  return matmul(matmul(tape.leaf(std::move(s_norm)), h_sub), w);
}

Var top_down_update(Tape& tape, Var h_super_p, Var h_sub_p, const std::vector<int>& sub_owner,
                    const MlpVars& sc) {
  Var gathered = gather_rows(h_super_p, sub_owner);
  Var alpha = sigmoid(mlp_forward(tape, concat_cols(gathered, h_sub_p), sc));
  return add(h_sub_p, scale_rows(gathered, alpha));
}

Var bottom_up_update(Tape& tape, Var h_sub_p, Var h_super_p, const std::vector<int>& sub_owner,
                     int tokens_per_part, const MlpVars& cs) {
  const Index n = tape.value(h_super_p).rows();
  for (int o : sub_owner)
    if (o < 0 || o >= n) throw std::invalid_argument("bottom_up_update: owner out of range");
  Var gathered = gather_rows(h_super_p, sub_owner);
  Var beta = sigmoid(mlp_forward(tape, concat_cols(h_sub_p, gathered), cs));
  Var weighted = scale_rows(h_sub_p, beta);
  Var summed = segment_sum_rows(weighted, sub_owner, static_cast<int>(n));
  return scale(summed, 1.0 / tokens_per_part);
}

Var layer_finalize(Tape& tape, Var h_acc, Var h_prev, Var gain, Var bias, double eps) {
  (void)tape;
  return layer_norm(add(h_acc, h_prev), gain, bias, eps);
}

AggregateOut aggregate_forward(Tape& tape, const HierGraph& g, const AggregatorVars& vars) {
  if (g.feat_dim != vars.cfg.dim)
    throw std::invalid_argument("aggregate_forward: graph feature dim " +
                                std::to_string(g.feat_dim) + " != configured dim " +
                                std::to_string(vars.cfg.dim));
  Var h_super = tape.leaf(g.super_block(), false, 2);
  Var h_sub = tape.leaf(g.sub_block(), false, 2);
  for (const AggregatorLayerVars& lv : vars.layers) {
    Var h_super_p = gat_super_layer(tape, h_super, g.e_super, lv.gat_w, lv.gat_a,
                                    vars.cfg.leaky_slope);
    Var h_sub_p = gcn_sub_layer(tape, h_sub, g.intra_part_edges, g.sub_owner, lv.gcn_w);
    Var h_sub_pp = top_down_update(tape, h_super_p, h_sub_p, g.sub_owner, lv.sc);
    Var h_super_pp =
        bottom_up_update(tape, h_sub_p, h_super_p, g.sub_owner, g.tokens_per_part, lv.cs);
    h_super = layer_finalize(tape, h_super_pp, h_super, lv.ln_super_gain, lv.ln_super_bias,
                             vars.cfg.ln_eps);
    h_sub = layer_finalize(tape, h_sub_pp, h_sub, lv.ln_sub_gain, lv.ln_sub_bias,
                           vars.cfg.ln_eps);
  }
  return AggregateOut{h_sub, h_super};
}

AggregateValues aggregate_forward_values(const HierGraph& g, ParamStore& store,
                                         const AggregatorConfig& cfg) {
  Tape tape;
  AggregatorVars vars = bind_aggregator(tape, store, cfg);
  AggregateOut out = aggregate_forward(tape, g, vars);
  return AggregateValues{tape.value(out.h_sub), tape.value(out.h_super)};
}

}  // namespace gpit
