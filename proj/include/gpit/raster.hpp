// Grayscale rasters, binary PGM (P5) I/O, and exhaustive normalized
// cross-correlation template matching at unit scale.
#pragma once

#include <string>
#include <vector>

#include "gpit/geometry.hpp"

namespace gpit {

struct RasterImage {
  int width = 0;
  int height = 0;
  std::vector<double> px;  // row-major intensities in [0,1]

  RasterImage() = default;
  RasterImage(int w, int h, double fill = 0.0)
      : width(w), height(h), px(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {}

  double& at(int x, int y) { return px[static_cast<size_t>(y) * width + x]; }
  double at(int x, int y) const { return px[static_cast<size_t>(y) * width + x]; }
};

RasterImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const RasterImage& img);

struct MatchResult {
  PartPlacement placement;
  double score = 0.0;
};

// Exhaustive NCC over all integer translations. Returns the placement whose
// zero-mean correlation with the template is maximal. A zero-variance
// template scores 0 at (0,0); zero-variance windows are skipped.
MatchResult locate_part(const RasterImage& tmpl, const RasterImage& full);

// Paints a filled rectangle of the given intensity, clipped to the canvas.
void fill_rect(RasterImage& img, const BBox& box, double intensity);

}  // namespace gpit
