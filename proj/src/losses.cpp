#include "gpit/losses.hpp"

#include <algorithm>
#include <stdexcept>

namespace gpit {

Var smoothness_loss(Tape& tape, Var h_super, const BinMat& a_super) {
  const Index n = tape.value(h_super).rows();
  if (a_super.rows() != n || a_super.cols() != n)
    throw std::invalid_argument("smoothness_loss: adjacency shape mismatch");
  if (n <= 1) return tape.scalar(0.0);
  // sum_{i<j} A_ij ||h_i - h_j||^2 == tr(H^T L H) with L the graph Laplacian
  MatX<double> lap = MatX<double>::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    double deg = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (a_super(i, j) != 0) {
        lap(i, j) = -1.0;
        deg += 1.0;
      }
    }
    lap(i, i) = deg;
  }
  Var quad = sum(mul(h_super, matmul(tape.leaf(std::move(lap)), h_super)));
  const double pairs = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  return scale(quad, 1.0 / pairs);
}

std::vector<std::pair<int, int>> all_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
  return out;
}

std::vector<std::pair<int, int>> sample_pairs(int n, int k, Rng& rng) {
  std::vector<std::pair<int, int>> pairs = all_pairs(n);
  if (k >= static_cast<int>(pairs.size())) return pairs;
  // Fisher-Yates prefix shuffle
  for (int i = 0; i < k; ++i) {
    const int j = i + rng.uniform_int(0, static_cast<int>(pairs.size()) - 1 - i);
    std::swap(pairs[static_cast<size_t>(i)], pairs[static_cast<size_t>(j)]);
  }
  pairs.resize(static_cast<size_t>(k));
  return pairs;
}

void init_edge_mlp_params(ParamStore& store, int dim, Rng& rng) {
  const Index in = 2 * static_cast<Index>(dim);
  const Index hidden = dim / 2 > 0 ? dim / 2 : 1;
  store.add("loss.edge.w1", uniform_init(in, hidden, in, rng));
  store.add("loss.edge.b1", uniform_init(1, hidden, in, rng, 1));
  store.add("loss.edge.w2", uniform_init(hidden, 1, hidden, rng));
  store.add("loss.edge.b2", uniform_init(1, 1, hidden, rng, 1));
}

MlpVars bind_edge_mlp(Tape& tape, ParamStore& store) {
  return MlpVars{store.bind(tape, "loss.edge.w1"), store.bind(tape, "loss.edge.b1"),
                 store.bind(tape, "loss.edge.w2"), store.bind(tape, "loss.edge.b2")};
}

Var edge_logits(Tape& tape, Var h_super, const std::vector<std::pair<int, int>>& pairs,
                const MlpVars& edge_mlp) {
  const Index n = tape.value(h_super).rows();
  std::vector<int> left, right;
  left.reserve(pairs.size());
  right.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.first < 0 || p.first >= n || p.second < 0 || p.second >= n)
      throw std::invalid_argument("edge_logits: pair index out of range");
    left.push_back(p.first);
    right.push_back(p.second);
  }
  Var cat = concat_cols(gather_rows(h_super, left), gather_rows(h_super, right));
  return mlp_forward(tape, cat, edge_mlp);
}

Var relational_loss(Tape& tape, Var logits, const BinMat& a_super,
                    const std::vector<std::pair<int, int>>& pairs) {
  const Index m = tape.value(logits).rows();
  if (m != static_cast<Index>(pairs.size()) || tape.value(logits).cols() != 1)
    throw std::invalid_argument("relational_loss: logits must be one column per pair");
  MatX<double> labels(m, 1);
  for (Index i = 0; i < m; ++i) {
    const auto& p = pairs[static_cast<size_t>(i)];
    labels(i, 0) = a_super(p.first, p.second) != 0 ? 1.0 : 0.0;
  }
  return bce_with_logits_mean(logits, labels);
}

Var total_graph_loss(Tape& tape, Var smooth, Var rel, const LossConfig& cfg) {
  (void)tape;
  if (cfg.lambda_g < 0.0 || cfg.lambda_r < 0.0)
    throw std::invalid_argument("total_graph_loss: lambdas must be non-negative");
  return add(scale(smooth, cfg.lambda_g), scale(rel, cfg.lambda_r));
}

}  // namespace gpit
