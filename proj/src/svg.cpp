#include "primflow/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace primflow::svg {

namespace {

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
                          "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd"};

const char* color(int64_t i) { return kPalette[static_cast<size_t>(i % 10)]; }

struct Doc {
  std::ostringstream body;
  double w, h;
  Doc(double w_, double h_) : w(w_), h(h_) {}
  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
        << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body.str() << "</svg>\n";
    return out.str();
  }
};

void polyline(Doc& d, const std::vector<std::pair<double, double>>& pts, const char* col,
              double width) {
  d.body << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"" << width
         << "\" points=\"";
  for (auto& [x, y] : pts) d.body << x << "," << y << " ";
  d.body << "\"/>\n";
}

}  // namespace

std::string render_dictionary(const Tensor& masked_atoms, const std::vector<int>& widths) {
  int64_t M = masked_atoms.dim(0), C = masked_atoms.dim(1), K = masked_atoms.dim(2);
  const double pw = 180, ph = 120, pad = 14;
  Doc doc(pw + 2 * pad, static_cast<double>(M) * (ph + pad) + pad);
  double lo = 0, hi = 0;
  for (double v : masked_atoms.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  for (int64_t j = 0; j < M; ++j) {
    double y0 = pad + static_cast<double>(j) * (ph + pad);
    doc.body << "<rect x=\"" << pad << "\" y=\"" << y0 << "\" width=\"" << pw << "\" height=\""
             << ph << "\" fill=\"none\" stroke=\"#ddd\"/>\n";
    doc.body << "<text x=\"" << pad + 4 << "\" y=\"" << y0 + 14
             << "\" font-size=\"11\" fill=\"#555\">atom " << j << " (w=" << widths[static_cast<size_t>(j)]
             << ")</text>\n";
    for (int64_t c = 0; c < C; ++c) {
      std::vector<std::pair<double, double>> pts;
      for (int64_t s = 0; s < K; ++s) {
        double x = pad + (static_cast<double>(s) / std::max<double>(1.0, static_cast<double>(K - 1))) * pw;
        double y = y0 + ph - (masked_atoms.at3(j, c, s) - lo) / (hi - lo) * ph;
        pts.emplace_back(x, y);
      }
      polyline(doc, pts, color(c), 1.5);
    }
    double xb = pad + (static_cast<double>(widths[static_cast<size_t>(j)] - 1) /
                       std::max<double>(1.0, static_cast<double>(K - 1))) * pw;
    doc.body << "<line x1=\"" << xb << "\" y1=\"" << y0 << "\" x2=\"" << xb << "\" y2=\""
             << y0 + ph << "\" stroke=\"#c44e52\" stroke-dasharray=\"4 3\"/>\n";
  }
  return doc.str();
}

std::string render_events(const std::vector<legal::Event>& events, int M, int L) {
  const double cell = 16, pad = 24;
  Doc doc(pad * 2 + cell * L, pad * 2 + cell * M);
  for (int j = 0; j <= M; ++j)
    doc.body << "<line x1=\"" << pad << "\" y1=\"" << pad + j * cell << "\" x2=\""
             << pad + cell * L << "\" y2=\"" << pad + j * cell << "\" stroke=\"#eee\"/>\n";
  for (const auto& e : events) {
    double x = pad + e.onset * cell;
    double w = std::min(e.offset, L) > e.onset ? (std::min(e.offset, L) - e.onset) * cell : cell * 0.3;
    doc.body << "<rect x=\"" << x << "\" y=\"" << pad + e.atom * cell + 1 << "\" width=\"" << w
             << "\" height=\"" << cell - 2 << "\" fill=\"" << color(e.atom) << "\" fill-opacity=\""
             << std::max(0.15, e.p) << "\"/>\n";
  }
  for (int j = 0; j < M; ++j)
    doc.body << "<text x=\"4\" y=\"" << pad + j * cell + cell - 4
             << "\" font-size=\"10\" fill=\"#555\">" << j << "</text>\n";
  return doc.str();
}

std::string render_tiling(const Tensor& x, const Tensor& gate) {
  int64_t C = x.dim(0), L = x.dim(1), M = gate.dim(0);
  const double w = 640, h = 240, pad = 16;
  Doc doc(w + 2 * pad, h + 2 * pad);
  double cell = w / static_cast<double>(L);
  for (int64_t t = 0; t < L; ++t) {
    int64_t owner = -1;
    for (int64_t j = 0; j < M; ++j)
      if (gate.at2(j, t) > 0.5) owner = j;
    if (owner >= 0)
      doc.body << "<rect x=\"" << pad + t * cell << "\" y=\"" << pad << "\" width=\"" << cell
               << "\" height=\"" << h << "\" fill=\"" << color(owner)
               << "\" fill-opacity=\"0.18\"/>\n";
  }
  double lo = 0, hi = 0;
  for (double v : x.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo < 1e-9) hi = lo + 1.0;
  for (int64_t c = 0; c < C; ++c) {
    std::vector<std::pair<double, double>> pts;
    for (int64_t t = 0; t < L; ++t)
      pts.emplace_back(pad + t * cell + cell / 2, pad + h - (x.at2(c, t) - lo) / (hi - lo) * h);
    polyline(doc, pts, color(c), 1.5);
  }
  return doc.str();
}

void save_svg(const std::string& svg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << svg;
}

}  // namespace primflow::svg
