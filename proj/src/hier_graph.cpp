#include "gpit/hier_graph.hpp"

#include <stdexcept>
#include <string>

namespace gpit {

HierGraph assemble_hier_graph(const std::vector<TokenGrid>& tokens, const BinMat& a_super) {
  if (tokens.empty()) throw std::invalid_argument("assemble_hier_graph: no parts");
  const int n = static_cast<int>(tokens.size());
  const Index d = tokens[0].tokens.rows();
  const Index dim = tokens[0].tokens.cols();
  if (d < 1 || dim < 1) throw std::invalid_argument("assemble_hier_graph: empty token grid");
  for (const TokenGrid& g : tokens)
    if (g.tokens.rows() != d || g.tokens.cols() != dim)
      throw std::invalid_argument("assemble_hier_graph: inconsistent token grid shapes");
  if (a_super.rows() != n || a_super.cols() != n)
    throw std::invalid_argument("assemble_hier_graph: adjacency must be " + std::to_string(n) +
                                "x" + std::to_string(n));
  for (int i = 0; i < n; ++i) {
    if (a_super(i, i) != 0)
      throw std::invalid_argument("assemble_hier_graph: adjacency diagonal must be zero");
    for (int j = 0; j < n; ++j)
      if (a_super(i, j) != a_super(j, i))
        throw std::invalid_argument("assemble_hier_graph: adjacency must be symmetric");
  }

  HierGraph g;
  g.n_parts = n;
  g.tokens_per_part = static_cast<int>(d);
  g.feat_dim = static_cast<int>(dim);
  g.a_super = a_super;
  g.e_super = edges_of(a_super);

  MatX<double> x0(n + n * d, dim);
  for (int i = 0; i < n; ++i) {
    const MatX<double>& tok = tokens[static_cast<size_t>(i)].tokens.mat();
    x0.row(i) = tok.colwise().mean();
    x0.middleRows(n + static_cast<Index>(i) * d, d) = tok;
  }
  g.x0 = Tensor::from_matrix(std::move(x0));

  g.sub_owner.resize(static_cast<size_t>(n) * static_cast<size_t>(d));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < d; ++k) {
      const int sub = i * static_cast<int>(d) + k;
      g.sub_owner[static_cast<size_t>(sub)] = i;
      g.e_sub.emplace_back(i, sub);
      for (int m = k + 1; m < d; ++m)
        g.intra_part_edges.emplace_back(sub, i * static_cast<int>(d) + m);
    }
  }
  return g;
}

}  // namespace gpit
