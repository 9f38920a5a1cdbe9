#include "gpit/raster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace gpit {

namespace {

// Skips whitespace and '#' comment lines between PGM header tokens.
int next_pgm_int(std::istream& is) {
  int c = is.get();
  while (is) {
    if (c == '#') {
      while (is && c != '\n') c = is.get();
      c = is.get();
    } else if (std::isspace(c)) {
      c = is.get();
    } else {
      break;
    }
  }
  if (!is) throw std::runtime_error("pgm: truncated header");
  int v = 0;
  bool any = false;
  while (is && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    any = true;
    c = is.get();
  }
  if (!any) throw std::runtime_error("pgm: malformed header");
  return v;
}

}  // namespace

RasterImage read_pgm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("pgm: cannot open '" + path + "'");
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  if (m0 != 'P' || m1 != '5') throw std::runtime_error("pgm: '" + path + "' is not binary PGM (P5)");
  const int w = next_pgm_int(is);
  const int h = next_pgm_int(is);
  const int maxval = next_pgm_int(is);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw std::runtime_error("pgm: unsupported dimensions or maxval in '" + path + "'");
  RasterImage img(w, h);
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw std::runtime_error("pgm: truncated pixel data in '" + path + "'");
  for (size_t i = 0; i < buf.size(); ++i) img.px[i] = static_cast<double>(buf[i]) / maxval;
  return img;
}

void write_pgm(const std::string& path, const RasterImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("pgm: cannot open '" + path + "' for writing");
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    const double v = std::clamp(img.px[i], 0.0, 1.0);
    buf[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!os) throw std::runtime_error("pgm: write to '" + path + "' failed");
}

MatchResult locate_part(const RasterImage& tmpl, const RasterImage& full) {
  if (tmpl.width > full.width || tmpl.height > full.height)
    throw std::invalid_argument("locate_part: template larger than image");
  if (tmpl.width <= 0 || tmpl.height <= 0)
    throw std::invalid_argument("locate_part: empty template");

  const int tw = tmpl.width, th = tmpl.height;
  const double n = static_cast<double>(tw) * th;

  double t_mean = 0.0;
  for (double v : tmpl.px) t_mean += v;
  t_mean /= n;
  std::vector<double> t0(tmpl.px.size());
  double t_var = 0.0;
  for (size_t i = 0; i < tmpl.px.size(); ++i) {
    t0[i] = tmpl.px[i] - t_mean;
    t_var += t0[i] * t0[i];
  }

  auto placement_at = [&](int x, int y) {
    PartPlacement p;
    p.corners = {{{double(x), double(y)},
                  {double(x + tw), double(y)},
                  {double(x + tw), double(y + th)},
                  {double(x), double(y + th)}}};
    return p;
  };

  MatchResult best;
  best.placement = placement_at(0, 0);
  best.score = 0.0;
  if (t_var <= 0.0) return best;  // constant template: defined fallback

  bool found = false;
  for (int y = 0; y + th <= full.height; ++y) {
    for (int x = 0; x + tw <= full.width; ++x) {
      double w_mean = 0.0;
      for (int r = 0; r < th; ++r)
        for (int c = 0; c < tw; ++c) w_mean += full.at(x + c, y + r);
      w_mean /= n;
      double cross = 0.0, w_var = 0.0;
      for (int r = 0; r < th; ++r) {
        for (int c = 0; c < tw; ++c) {
          const double wv = full.at(x + c, y + r) - w_mean;
          cross += t0[static_cast<size_t>(r) * tw + c] * wv;
          w_var += wv * wv;
        }
      }
      if (w_var <= 0.0) continue;  // flat window cannot be normalized
      const double score = cross / std::sqrt(t_var * w_var);
      if (!found || score > best.score) {
        best.score = score;
        best.placement = placement_at(x, y);
        found = true;
      }
    }
  }
  return best;
}

void fill_rect(RasterImage& img, const BBox& box, double intensity) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x_min)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y_min)));
  const int x1 = std::min(img.width, static_cast<int>(std::ceil(box.x_max())));
  const int y1 = std::min(img.height, static_cast<int>(std::ceil(box.y_max())));
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) img.at(x, y) = intensity;
}

}  // namespace gpit
