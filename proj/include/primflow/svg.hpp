#pragma once

#include <string>
#include <vector>

#include "primflow/legality.hpp"
#include "primflow/tensor.hpp"

namespace primflow::svg {

/// Per-atom panels: one polyline per channel with the integer-width boundary
/// marked.
std::string render_dictionary(const Tensor& masked_atoms, const std::vector<int>& widths);

/// Event timeline: one lane per atom, a box per event spanning its interval,
/// box opacity following the event probability.
std::string render_events(const std::vector<legal::Event>& events, int M, int L);

/// Trajectory channels over a background striped by the owning atom.
std::string render_tiling(const Tensor& x, const Tensor& gate);

void save_svg(const std::string& svg, const std::string& path);

}  // namespace primflow::svg
