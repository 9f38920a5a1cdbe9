#include "gpit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gpit {

BBox bbox_from_corners(const PartPlacement& p) {
  double xmin = p.corners[0][0], xmax = p.corners[0][0];
  double ymin = p.corners[0][1], ymax = p.corners[0][1];
  for (const auto& c : p.corners) {
    if (!std::isfinite(c[0]) || !std::isfinite(c[1]))
      throw std::invalid_argument("bbox_from_corners: non-finite corner");
    xmin = std::min(xmin, c[0]);
    xmax = std::max(xmax, c[0]);
    ymin = std::min(ymin, c[1]);
    ymax = std::max(ymax, c[1]);
  }
  return BBox{xmin, ymin, xmax - xmin, ymax - ymin};
}

std::array<double, 2> centroid(const BBox& b) {
  return {(b.x_min + b.x_max()) / 2.0, (b.y_min + b.y_max()) / 2.0};
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min, b.y_min);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;  // two zero-area boxes
  return inter / uni;
}

BinMat build_adjacency(const std::vector<BBox>& boxes, const GraphPriorConfig& cfg) {
  const int n = static_cast<int>(boxes.size());
  BinMat a = BinMat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const auto ci = centroid(boxes[static_cast<size_t>(i)]);
    for (int j = i + 1; j < n; ++j) {
      const auto cj = centroid(boxes[static_cast<size_t>(j)]);
      const double ov = iou(boxes[static_cast<size_t>(i)], boxes[static_cast<size_t>(j)]);
      const bool overlap = cfg.iou_strict ? (ov > cfg.tau_iou) : (ov >= cfg.tau_iou);
      const double dist = std::hypot(ci[0] - cj[0], ci[1] - cj[1]);
      if (overlap || dist <= cfg.tau_dist) {
        a(i, j) = 1;
        a(j, i) = 1;
      }
    }
  }
  return a;
}

BinMat load_graph_json(std::istream& is) {
  nlohmann::json j;
  is >> j;
  if (!j.contains("n_parts") || !j["n_parts"].is_number_integer())
    throw std::runtime_error("graph json: missing integer field 'n_parts'");
  const int n = j["n_parts"].get<int>();
  if (n < 1) throw std::runtime_error("graph json: n_parts must be >= 1");
  BinMat a = BinMat::Zero(n, n);
  if (j.contains("edges")) {
    for (const auto& e : j["edges"]) {
      if (!e.is_array() || e.size() != 2)
        throw std::runtime_error("graph json: each edge must be a pair [i,j]");
      const int i = e[0].get<int>();
      const int k = e[1].get<int>();
      if (i < 0 || i >= n || k < 0 || k >= n)
        throw std::runtime_error("graph json: edge index out of bounds");
      if (i == k) throw std::runtime_error("graph json: self edges are not allowed");
      a(i, k) = 1;
      a(k, i) = 1;
    }
  }
  return a;
}

BinMat load_graph_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("graph json: cannot open '" + path + "'");
  return load_graph_json(is);
}

void save_graph_json(std::ostream& os, const BinMat& a) {
  nlohmann::json j;
  j["n_parts"] = static_cast<int>(a.rows());
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : edges_of(a)) edges.push_back({e.first, e.second});
  j["edges"] = edges;
  os << j.dump() << "\n";
}

void save_graph_json_file(const std::string& path, const BinMat& a) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("graph json: cannot open '" + path + "' for writing");
  save_graph_json(os, a);
}

std::vector<std::pair<int, int>> edges_of(const BinMat& a) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      if (a(i, j) != 0) out.emplace_back(i, j);
  return out;
}

}  // namespace gpit
