#include "gpit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "gpit/rng.hpp"

namespace gpit {

namespace {

// Places a box overlapping the parent with positive area: small overlap along
// a randomly signed attach axis (pushing layouts apart), larger overlap along
// the lateral axis. Canvas clamping preserves the overlap.
BBox attach_box(const BBox& parent, double w, double h, double canvas, Rng& rng) {
  BBox b;
  b.w = w;
  b.h = h;
  const bool attach_x = rng.uniform() < 0.5;
  const bool positive_side = rng.uniform() < 0.5;
  const double ov_x = rng.uniform(2.0, 12.0);
  const double ov_y = rng.uniform(2.0, 12.0);
  if (attach_x) {
    b.x_min = positive_side ? parent.x_max() - ov_x : parent.x_min - w + ov_x;
    b.y_min = rng.uniform(parent.y_min - h + 2.0, parent.y_max() - 2.0);
  } else {
    b.y_min = positive_side ? parent.y_max() - ov_y : parent.y_min - h + ov_y;
    b.x_min = rng.uniform(parent.x_min - w + 2.0, parent.x_max() - 2.0);
  }
  b.x_min = std::clamp(b.x_min, 0.0, canvas - w);
  b.y_min = std::clamp(b.y_min, 0.0, canvas - h);
  return b;
}

}  // namespace

PlantedGeometry sample_layout(int n_parts, const GraphPriorConfig& gcfg, const SynthConfig& cfg,
                              std::uint64_t seed) {
  if (n_parts < 1 || n_parts > cfg.n_max)
    throw std::invalid_argument("sample_layout: n_parts must be in [1, n_max]");
  Rng rng(mix_seed(seed, 0x6c61796fULL));
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    std::vector<BBox> boxes;
    std::vector<std::pair<int, int>> tree;
    for (int i = 0; i < n_parts; ++i) {
      const double w = rng.uniform(cfg.min_side, cfg.max_side);
      const double h = rng.uniform(cfg.min_side, cfg.max_side);
      if (i == 0) {
        boxes.push_back(BBox{rng.uniform(0.0, cfg.canvas - w), rng.uniform(0.0, cfg.canvas - h),
                             w, h});
      } else {
        const int parent = rng.uniform_int(0, i - 1);
        boxes.push_back(attach_box(boxes[static_cast<size_t>(parent)], w, h, cfg.canvas, rng));
        tree.emplace_back(parent, i);
      }
    }
    BinMat a = build_adjacency(boxes, gcfg);
    bool ok = true;
    for (const auto& e : tree)
      if (a(e.first, e.second) == 0) ok = false;
    if (!ok) continue;  // attachment failed to certify; re-draw

    PlantedGeometry out;
    out.layout.canvas = cfg.canvas;
    out.layout.boxes.assign(static_cast<size_t>(cfg.n_max), BBox{});
    out.layout.appearance.assign(static_cast<size_t>(cfg.n_max), {0, 0, 0, 0});
    out.layout.valid.assign(static_cast<size_t>(cfg.n_max), false);
    for (int i = 0; i < n_parts; ++i) {
      out.layout.boxes[static_cast<size_t>(i)] = boxes[static_cast<size_t>(i)];
      for (int c = 0; c < 4; ++c)
        out.layout.appearance[static_cast<size_t>(i)][static_cast<size_t>(c)] =
            rng.uniform(-1.0, 1.0);
      out.layout.valid[static_cast<size_t>(i)] = true;
    }
    out.a_super = a;
    return out;
  }
  throw std::runtime_error("sample_layout: retry budget exhausted, reseed");
}

std::vector<TokenGrid> encode_parts(const LayoutConcept& layout, std::uint64_t example_seed,
                                    const SynthConfig& cfg) {
  const int d = cfg.tokens_per_part;
  const int dim = cfg.feat_dim;
  const int feat = 4 + 2 + cfg.n_max * d;  // appearance, size, flat token index one-hot

  // The linear map is frozen by the global encoder seed, independent of the
  // example; only the additive noise varies per example.
  Rng map_rng(cfg.token_map_seed);
  MatX<double> map(dim, feat);
  const double s = 1.0 / std::sqrt(static_cast<double>(feat));
  for (Index r = 0; r < map.rows(); ++r)
    for (Index c = 0; c < map.cols(); ++c) map(r, c) = s * map_rng.normal();

  Rng noise_rng(mix_seed(example_seed, 0x746f6b656eULL));
  std::vector<TokenGrid> out;
  for (size_t i = 0; i < layout.valid.size(); ++i) {
    if (!layout.valid[i]) continue;
    MatX<double> grid(d, dim);
    for (int k = 0; k < d; ++k) {
      Eigen::VectorXd f = Eigen::VectorXd::Zero(feat);
      for (int c = 0; c < 4; ++c) f(c) = layout.appearance[i][static_cast<size_t>(c)];
      f(4) = layout.boxes[i].w / layout.canvas;
      f(5) = layout.boxes[i].h / layout.canvas;
      f(6 + static_cast<int>(i) * d + k) = 1.0;
      Eigen::VectorXd tok = map * f;
      for (int c = 0; c < dim; ++c)
        grid(k, c) = tok(c) + cfg.token_noise * noise_rng.normal();
    }
    out.push_back(TokenGrid{static_cast<int>(i), Tensor::from_matrix(std::move(grid))});
  }
  return out;
}

PlantedExample make_planted_example(int n_parts, const GraphPriorConfig& gcfg,
                                    const SynthConfig& cfg, std::uint64_t seed) {
  PlantedGeometry geom = sample_layout(n_parts, gcfg, cfg, seed);
  PlantedExample ex;
  ex.layout = std::move(geom.layout);
  ex.a_super = std::move(geom.a_super);
  ex.tokens = encode_parts(ex.layout, seed, cfg);
  ex.seed = seed;
  return ex;
}

MatX<double> layout_to_vector(const LayoutConcept& layout, const SynthConfig& cfg) {
  MatX<double> v = MatX<double>::Zero(1, static_cast<Index>(cfg.n_max) * 8);
  for (int i = 0; i < cfg.n_max && i < static_cast<int>(layout.valid.size()); ++i) {
    if (!layout.valid[static_cast<size_t>(i)]) continue;
    const BBox& b = layout.boxes[static_cast<size_t>(i)];
    const Index o = static_cast<Index>(i) * 8;
    v(0, o + 0) = b.x_min / layout.canvas;
    v(0, o + 1) = b.y_min / layout.canvas;
    v(0, o + 2) = b.w / layout.canvas;
    v(0, o + 3) = b.h / layout.canvas;
    for (int c = 0; c < 4; ++c)
      v(0, o + 4 + c) = layout.appearance[static_cast<size_t>(i)][static_cast<size_t>(c)];
  }
  return v;
}

MatX<double> layout_mask(const LayoutConcept& layout, const SynthConfig& cfg) {
  MatX<double> m = MatX<double>::Zero(1, static_cast<Index>(cfg.n_max) * 8);
  for (int i = 0; i < cfg.n_max && i < static_cast<int>(layout.valid.size()); ++i)
    if (layout.valid[static_cast<size_t>(i)])
      m.block(0, static_cast<Index>(i) * 8, 1, 8).setOnes();
  return m;
}

LayoutConcept vector_to_layout(const MatX<double>& v, int n_parts, const SynthConfig& cfg) {
  if (v.rows() != 1 || v.cols() != static_cast<Index>(cfg.n_max) * 8)
    throw std::invalid_argument("vector_to_layout: wrong vector length");
  if (n_parts < 1 || n_parts > cfg.n_max)
    throw std::invalid_argument("vector_to_layout: n_parts out of range");
  LayoutConcept out;
  out.canvas = cfg.canvas;
  out.boxes.assign(static_cast<size_t>(cfg.n_max), BBox{});
  out.appearance.assign(static_cast<size_t>(cfg.n_max), {0, 0, 0, 0});
  out.valid.assign(static_cast<size_t>(cfg.n_max), false);
  for (int i = 0; i < n_parts; ++i) {
    const Index o = static_cast<Index>(i) * 8;
    BBox b;
    b.x_min = v(0, o + 0) * cfg.canvas;
    b.y_min = v(0, o + 1) * cfg.canvas;
    b.w = std::max(1.0, v(0, o + 2) * cfg.canvas);  // malformed samples stay measurable
    b.h = std::max(1.0, v(0, o + 3) * cfg.canvas);
    out.boxes[static_cast<size_t>(i)] = b;
    for (int c = 0; c < 4; ++c)
      out.appearance[static_cast<size_t>(i)][static_cast<size_t>(c)] = v(0, o + 4 + c);
    out.valid[static_cast<size_t>(i)] = true;
  }
  return out;
}

double edge_accuracy(const LayoutConcept& generated, const BinMat& a_input,
                     const GraphPriorConfig& gcfg) {
  const int n = static_cast<int>(a_input.rows());
  if (generated.n_parts() < 1) throw std::invalid_argument("edge_accuracy: no valid parts");
  if (generated.n_parts() < n)
    throw std::invalid_argument("edge_accuracy: generated layout has fewer parts than the input graph");
  if (n == 1) return 1.0;  // no pair constraints to violate
  std::vector<BBox> boxes;
  for (int i = 0; i < n; ++i) {
    BBox b = generated.boxes[static_cast<size_t>(i)];
    b.w = std::max(b.w, 1.0);
    b.h = std::max(b.h, 1.0);
    boxes.push_back(b);
  }
  const BinMat got = build_adjacency(boxes, gcfg);
  int match = 0, total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      ++total;
      if (got(i, j) == a_input(i, j)) ++match;
    }
  return static_cast<double>(match) / static_cast<double>(total);
}

FlowBatch make_batch(const std::vector<PlantedExample>& examples, int batch_size,
                     std::uint64_t seed, const SynthConfig& cfg) {
  if (examples.empty()) throw std::invalid_argument("make_batch: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("make_batch: batch_size must be >= 1");
  Rng rng(mix_seed(seed, 0x62617463ULL));
  std::vector<int> idx(examples.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  for (size_t i = 0; i + 1 < idx.size(); ++i) {
    const size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int>(idx.size() - 1 - i)));
    std::swap(idx[i], idx[j]);
  }
  const int b = std::min<int>(batch_size, static_cast<int>(examples.size()));
  const Index dx = static_cast<Index>(cfg.n_max) * 8;

  FlowBatch batch;
  batch.x1.resize(b, dx);
  batch.x0.resize(b, dx);
  batch.mask.resize(b, dx);
  batch.t.resize(static_cast<size_t>(b));
  for (int r = 0; r < b; ++r) {
    const PlantedExample& ex = examples[static_cast<size_t>(idx[static_cast<size_t>(r)])];
    batch.x1.row(r) = layout_to_vector(ex.layout, cfg);
    batch.mask.row(r) = layout_mask(ex.layout, cfg);
    for (Index c = 0; c < dx; ++c) batch.x0(r, c) = rng.normal();
    batch.t[static_cast<size_t>(r)] = rng.uniform();
    batch.conditions.push_back(assemble_hier_graph(ex.tokens, ex.a_super));
  }
  return batch;
}

void write_dataset(const std::string& path, const std::vector<PlantedExample>& examples) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("dataset: cannot open '" + path + "' for writing");
  for (const PlantedExample& ex : examples) {
    nlohmann::json j;
    j["seed"] = ex.seed;
    j["n"] = ex.layout.n_parts();
    j["canvas"] = ex.layout.canvas;
    nlohmann::json parts = nlohmann::json::array();
    for (size_t i = 0; i < ex.layout.valid.size(); ++i) {
      if (!ex.layout.valid[i]) continue;
      const BBox& b = ex.layout.boxes[i];
      parts.push_back({{"box", {b.x_min, b.y_min, b.w, b.h}},
                       {"app", ex.layout.appearance[i]}});
    }
    j["parts"] = parts;
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : edges_of(ex.a_super)) edges.push_back({e.first, e.second});
    j["edges"] = edges;
    os << j.dump() << "\n";
  }
  if (!os) throw std::runtime_error("dataset: write to '" + path + "' failed");
}

std::vector<PlantedExample> read_dataset(const std::string& path, const GraphPriorConfig& gcfg,
                                         const SynthConfig& cfg) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("dataset: cannot open '" + path + "'");
  std::vector<PlantedExample> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    PlantedExample ex;
    ex.seed = j.at("seed").get<std::uint64_t>();
    const int n = j.at("n").get<int>();
    if (n < 1 || n > cfg.n_max)
      throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": bad part count");
    ex.layout.canvas = j.at("canvas").get<double>();
    ex.layout.boxes.assign(static_cast<size_t>(cfg.n_max), BBox{});
    ex.layout.appearance.assign(static_cast<size_t>(cfg.n_max), {0, 0, 0, 0});
    ex.layout.valid.assign(static_cast<size_t>(cfg.n_max), false);
    const auto& parts = j.at("parts");
    if (static_cast<int>(parts.size()) != n)
      throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": part count mismatch");
    for (int i = 0; i < n; ++i) {
      const auto& p = parts[static_cast<size_t>(i)];
      const auto& box = p.at("box");
      ex.layout.boxes[static_cast<size_t>(i)] =
          BBox{box[0].get<double>(), box[1].get<double>(), box[2].get<double>(),
               box[3].get<double>()};
      for (int c = 0; c < 4; ++c)
        ex.layout.appearance[static_cast<size_t>(i)][static_cast<size_t>(c)] =
            p.at("app")[static_cast<size_t>(c)].get<double>();
      ex.layout.valid[static_cast<size_t>(i)] = true;
    }
    ex.a_super = BinMat::Zero(n, n);
    for (const auto& e : j.at("edges")) {
      const int a = e[0].get<int>(), b = e[1].get<int>();
      if (a < 0 || a >= n || b < 0 || b >= n || a == b)
        throw std::runtime_error("dataset: line " + std::to_string(line_no) + ": bad edge");
      ex.a_super(a, b) = 1;
      ex.a_super(b, a) = 1;
    }
    std::vector<BBox> boxes(ex.layout.boxes.begin(), ex.layout.boxes.begin() + n);
    if (build_adjacency(boxes, gcfg) != ex.a_super)
      throw std::runtime_error("dataset: line " + std::to_string(line_no) +
                               ": stored adjacency fails certification");
    ex.tokens = encode_parts(ex.layout, ex.seed, cfg);
    out.push_back(std::move(ex));
  }
  return out;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("hash: cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (is.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << h;
  return ss.str();
}

RasterImage render_layout(const LayoutConcept& layout, int raster_size) {
  RasterImage img(raster_size, raster_size, 0.0);
  const double s = raster_size / layout.canvas;
  const int n = layout.n_parts();
  int drawn = 0;
  for (size_t i = 0; i < layout.valid.size(); ++i) {
    if (!layout.valid[i]) continue;
    const BBox& b = layout.boxes[i];
    const double shade = n > 1 ? 0.35 + 0.6 * drawn / (n - 1) : 0.8;
    fill_rect(img, BBox{b.x_min * s, b.y_min * s, b.w * s, b.h * s}, shade);
    ++drawn;
  }
  return img;
}

}  // namespace gpit
