// Synthetic stand-in for the encoder/dataset pipeline: planted part layouts
// with certified adjacency, a frozen pseudo-encoder producing token grids,
// layout <-> target-vector codecs, batching, and the edge-accuracy metric.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gpit/geometry.hpp"
#include "gpit/hier_graph.hpp"
#include "gpit/prior.hpp"
#include "gpit/raster.hpp"

namespace gpit {

struct SynthConfig {
  int n_max = 6;
  int tokens_per_part = 4;  // d
  int feat_dim = 32;        // D
  double canvas = 1024.0;
  double min_side = 60.0;
  double max_side = 180.0;
  std::uint64_t token_map_seed = 0x47504954;  // frozen pseudo-encoder seed
  double token_noise = 0.05;
  int max_retries = 16;
};

// The generation target: up to n_max part slots, each a box plus a 4-float
// appearance code, with a validity mask. Masked slots are zero.
struct LayoutConcept {
  double canvas = 1024.0;
  std::vector<BBox> boxes;
  std::vector<std::array<double, 4>> appearance;
  std::vector<bool> valid;

  int n_parts() const {
    int n = 0;
    for (bool v : valid) n += v ? 1 : 0;
    return n;
  }
};

struct PlantedExample {
  LayoutConcept layout;
  BinMat a_super;
  std::vector<TokenGrid> tokens;
  std::uint64_t seed = 0;
};

// Random spanning-tree layout: each part is attached overlapping a random
// previous part, guaranteeing its planted edge; extra proximity edges arise
// from the centroid-distance rule. The returned adjacency is re-derived via
// build_adjacency and certified against the attachment tree, retrying on
// mismatch up to cfg.max_retries.
struct PlantedGeometry {
  LayoutConcept layout;
  BinMat a_super;
};
PlantedGeometry sample_layout(int n_parts, const GraphPriorConfig& gcfg, const SynthConfig& cfg,
                              std::uint64_t seed);

// Frozen pseudo-encoder: a fixed random linear map of
// [appearance; normalized box size; flat token-index one-hot] plus small
// per-example noise. No learned state.
std::vector<TokenGrid> encode_parts(const LayoutConcept& layout, std::uint64_t example_seed,
                                    const SynthConfig& cfg);

PlantedExample make_planted_example(int n_parts, const GraphPriorConfig& gcfg,
                                    const SynthConfig& cfg, std::uint64_t seed);

// Layout <-> flat target vector (1 x n_max*8). Box coordinates are stored
// normalized by the canvas size; masked slots are zero.
MatX<double> layout_to_vector(const LayoutConcept& layout, const SynthConfig& cfg);
MatX<double> layout_mask(const LayoutConcept& layout, const SynthConfig& cfg);

// Decodes the first n_parts slots; box sides are clamped to >= 1 canvas unit.
LayoutConcept vector_to_layout(const MatX<double>& v, int n_parts, const SynthConfig& cfg);

// Fraction of input-specified pair constraints (both edges and non-edges)
// reproduced by the generated layout; 1.0 for a single part.
double edge_accuracy(const LayoutConcept& generated, const BinMat& a_input,
                     const GraphPriorConfig& gcfg);

// Deterministic batch: shuffles by seed, flattens targets, draws x0 ~ N(0,I)
// and t ~ U[0,1] per example.
FlowBatch make_batch(const std::vector<PlantedExample>& examples, int batch_size,
                     std::uint64_t seed, const SynthConfig& cfg);

// JSONL dataset: one object per line with geometry, edge list, and seed;
// tokens are regenerated from seeds on load.
void write_dataset(const std::string& path, const std::vector<PlantedExample>& examples);
std::vector<PlantedExample> read_dataset(const std::string& path, const GraphPriorConfig& gcfg,
                                         const SynthConfig& cfg);

// FNV-1a hash of a file's bytes, as hex; used to assert shared datasets.
std::string file_hash_hex(const std::string& path);

// Debug rendering of a layout to a grayscale raster.
RasterImage render_layout(const LayoutConcept& layout, int raster_size);

}  // namespace gpit
