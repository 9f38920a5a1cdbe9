// Part geometry: axis-aligned bounding boxes, IoU / centroid measures, and the
// binary super-node adjacency construction. Also the JSON graph file used to
// supply adjacency directly at inference time.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace gpit {

using BinMat = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x_max() const { return x_min + w; }
  double y_max() const { return y_min + h; }
  double area() const { return w * h; }
};

// A localized part: four transformed corner points in original-image coords.
struct PartPlacement {
  int part_index = 0;
  std::array<std::array<double, 2>, 4> corners{};
};

struct GraphPriorConfig {
  double tau_iou = 0.0;
  double tau_dist = 512.0;
  // Strict comparison reads tau_iou = 0 as "any positive overlap"; the
  // non-strict variant (>=) is kept selectable.
  bool iou_strict = true;
};

BBox bbox_from_corners(const PartPlacement& p);

std::array<double, 2> centroid(const BBox& b);

// Intersection over union; 0 when the union has zero area.
double iou(const BBox& a, const BBox& b);

// A_ij = 1 iff i != j and (IoU clears tau_iou per iou_strict) or the centroid
// distance is <= tau_dist. Symmetric, zero diagonal.
BinMat build_adjacency(const std::vector<BBox>& boxes, const GraphPriorConfig& cfg);

// Plain-text JSON graph: {"n_parts": N, "edges": [[i,j],...]}, 0-based.
BinMat load_graph_json(std::istream& is);
BinMat load_graph_json_file(const std::string& path);
void save_graph_json(std::ostream& os, const BinMat& a);
void save_graph_json_file(const std::string& path, const BinMat& a);

// Unordered edge list (i < j) of an adjacency matrix.
std::vector<std::pair<int, int>> edges_of(const BinMat& a);

}  // namespace gpit
