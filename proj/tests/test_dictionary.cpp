#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "primflow/dictionary.hpp"

using namespace primflow;
using namespace primflow::dict;

TEST_CASE("soft width: center and saturation") {
  CHECK(soft_width(0.0, 9) == doctest::Approx(5.0));
  CHECK(soft_width(50.0, 9) == doctest::Approx(9.0).epsilon(1e-9));
  CHECK(soft_width(-50.0, 9) == doctest::Approx(1.0).epsilon(1e-9));
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    double a = rng.normal(), b = a + std::abs(rng.normal());
    CHECK(soft_width(a, 7) <= soft_width(b, 7));
  }
}

TEST_CASE("length mask: direct evaluation at w=5, alpha=10, K=8") {
  auto m = length_mask(5.0, 8, 10.0);
  CHECK(m[4] == doctest::Approx(0.9933071490757153).epsilon(1e-9));
  CHECK(m[5] == doctest::Approx(0.006692850924284856).epsilon(1e-9));
  for (size_t s = 1; s < m.size(); ++s) CHECK(m[s] < m[s - 1]);
  // sigmoid range; moderate steepness avoids saturating to 1.0 in doubles
  for (double v : length_mask(4.2, 8, 2.0)) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("length mask: large alpha approaches a hard indicator") {
  auto m = length_mask(3.7, 8, 1e4);
  for (int s = 0; s < 8; ++s) {
    bool inside = s < 3.7 - 0.5;
    CHECK(m[static_cast<size_t>(s)] == doctest::Approx(inside ? 1.0 : 0.0).epsilon(1e-6));
  }
}

TEST_CASE("mask monotonicity in phi") {
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    double phi = rng.normal();
    double phi2 = phi + std::abs(rng.normal());
    auto m1 = length_mask(soft_width(phi, 9), 9, 10.0);
    auto m2 = length_mask(soft_width(phi2, 9), 9, 10.0);
    for (size_t s = 0; s < m1.size(); ++s) CHECK(m2[s] >= m1[s]);
  }
}

TEST_CASE("effective atom: hard mask keeps the first three columns of ones") {
  Atom a;
  a.content = Tensor::full({2, 6}, 1.0);
  a.width_param = std::log(0.4 / 0.6);  // soft width exactly 3 for K=6
  auto e = effective_atom(a, 1e4);
  CHECK(e.soft_w == doctest::Approx(3.0));
  CHECK(e.int_w == 3);
  for (int64_t c = 0; c < 2; ++c) {
    for (int64_t s = 0; s < 3; ++s) CHECK(e.masked.at2(c, s) == doctest::Approx(1.0).epsilon(1e-6));
    for (int64_t s = 3; s < 6; ++s) CHECK(e.masked.at2(c, s) == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("effective atom: width rounding") {
  Atom a;
  a.content = Tensor::full({1, 9}, 1.0);
  a.width_param = 0.0;  // soft width 5.0
  CHECK(effective_atom(a, 10.0).int_w == 5);
  Atom b;
  b.content = Tensor::full({1, 8}, 1.0);
  b.width_param = 0.0;  // soft width 4.5: ties round up
  CHECK(effective_atom(b, 10.0).int_w == 5);
}

TEST_CASE("effective atom: decay strictly beyond the integer width") {
  Rng rng(4);
  for (int i = 0; i < 30; ++i) {
    Atom a;
    a.content = rng.normal_tensor({2, 9}, 1.0);
    a.width_param = rng.normal();
    double alpha = 10.0;
    auto e = effective_atom(a, alpha);
    double bound = primflow::sigmoid(-alpha / 2.0);
    for (int64_t c = 0; c < 2; ++c)
      for (int64_t s = e.int_w + 1; s < 9; ++s)
        CHECK(std::abs(e.masked.at2(c, s)) <= std::abs(a.content.at2(c, s)) * bound + 1e-12);
  }
}

TEST_CASE("sample placements: saturated logits") {
  Rng rng(5);
  auto all_on = sample_placements(Tensor::full({3, 8}, 50.0), rng);
  for (double v : all_on.binary.data) CHECK(v == 1.0);
  auto all_off = sample_placements(Tensor::full({3, 8}, -50.0), rng);
  for (double v : all_off.binary.data) CHECK(v == 0.0);
  CHECK(all_on.probs[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("sample placements: binomial concentration at q=0.3") {
  double q = 0.3;
  double logit = std::log(q / (1.0 - q));
  Rng rng(6);
  int64_t n = 100000;
  auto st = sample_placements(Tensor::full({1, n}, logit), rng);
  double mean = 0;
  for (double v : st.binary.data) mean += v;
  mean /= static_cast<double>(n);
  double bound = 3.0 * std::sqrt(q * (1.0 - q) / static_cast<double>(n));
  CHECK(std::abs(mean - q) <= bound);
}

TEST_CASE("wta gate: single event owns its interval") {
  Tensor R({2, 8});
  R.at2(0, 2) = 1.0;
  Tensor g = wta_gate(R, {3, 2}, {0.0, 0.0});
  for (int64_t t = 0; t < 8; ++t) {
    CHECK(g.at2(0, t) == ((t >= 2 && t < 5) ? 1.0 : 0.0));
    CHECK(g.at2(1, t) == 0.0);
  }
}

TEST_CASE("wta gate: higher onset probability wins the contested timestep") {
  Tensor R({2, 8});
  R.at2(0, 3) = 0.9;  // covers [3,6)
  R.at2(1, 4) = 0.2;  // covers [4,6)
  Tensor g = wta_gate(R, {3, 2}, {0.0, 0.0});
  CHECK(g.at2(0, 4) == 1.0);
  CHECK(g.at2(1, 4) == 0.0);
}

TEST_CASE("wta gate: equal scores break to the lowest atom index") {
  Tensor R({4, 8});
  R.at2(1, 2) = 1.0;
  R.at2(3, 2) = 1.0;
  Tensor g = wta_gate(R, {3, 3, 3, 3}, {0.0, 0.0, 0.0, 0.0});
  for (int64_t t = 2; t < 5; ++t) {
    CHECK(g.at2(1, t) == 1.0);
    CHECK(g.at2(3, t) == 0.0);
  }
}

TEST_CASE("wta gate: columns one-hot or zero, never outside placed intervals") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor R({3, 12});
    for (double& v : R.data) v = rng.bernoulli(0.2) ? rng.uniform(0.2, 1.0) : 0.0;
    std::vector<int> widths{2, 4, 3};
    Tensor g = wta_gate(R, widths, {0.1, 0.0, -0.1});
    for (int64_t t = 0; t < 12; ++t) {
      double colsum = 0;
      for (int64_t j = 0; j < 3; ++j) {
        CHECK((g.at2(j, t) == 0.0 || g.at2(j, t) == 1.0));
        if (g.at2(j, t) == 1.0) {
          bool covered = false;
          for (int64_t k = 0; k < 12; ++k)
            if (R.at2(j, k) > kEventEps && t >= k && t < k + widths[static_cast<size_t>(j)])
              covered = true;
          CHECK(covered);
        }
        colsum += g.at2(j, t);
      }
      CHECK(colsum <= 1.0);
    }
  }
}

namespace {
Tensor two_channel_atom() {
  // columns (1,1),(2,2),(3,3)
  Tensor a({2, 3});
  for (int64_t s = 0; s < 3; ++s) {
    a.at2(0, s) = static_cast<double>(s + 1);
    a.at2(1, s) = static_cast<double>(s + 1);
  }
  return a;
}
}  // namespace

TEST_CASE("synthesize: one event copies the atom verbatim") {
  Tensor R({1, 8});
  R.at2(0, 2) = 1.0;
  Tensor g = wta_gate(R, {3}, {0.0});
  Tensor x = synthesize(std::vector<Tensor>{two_channel_atom()}, {3}, R, g);
  for (int64_t t = 0; t < 8; ++t)
    for (int64_t c = 0; c < 2; ++c)
      CHECK(x.at2(c, t) == ((t >= 2 && t < 5) ? static_cast<double>(t - 1) : 0.0));
}

TEST_CASE("synthesize: disjoint onsets give verbatim copies") {
  Tensor R({1, 8});
  R.at2(0, 0) = 1.0;
  R.at2(0, 5) = 1.0;
  Tensor g = wta_gate(R, {3}, {0.0});
  Tensor x = synthesize(std::vector<Tensor>{two_channel_atom()}, {3}, R, g);
  for (int64_t s = 0; s < 3; ++s) {
    CHECK(x.at2(0, s) == static_cast<double>(s + 1));
    CHECK(x.at2(0, 5 + s) == static_cast<double>(s + 1));
  }
  CHECK(x.at2(0, 3) == 0.0);
  CHECK(x.at2(0, 4) == 0.0);
}

TEST_CASE("synthesize: the gate owner supplies the overlap columns") {
  Tensor atomA = Tensor::full({1, 4}, 2.0);
  Tensor atomB = Tensor::full({1, 4}, 5.0);
  Tensor R({2, 8});
  R.at2(0, 2) = 0.9;  // A covers [2,6)
  R.at2(1, 4) = 0.3;  // B covers [4,8)
  // binarized placements for synthesis
  Tensor Rb = R;
  Rb.at2(0, 2) = 1.0;
  Rb.at2(1, 4) = 1.0;
  Tensor g = wta_gate(R, {4, 4}, {0.0, 0.0});  // A wins the overlap
  Tensor x = synthesize(std::vector<Tensor>{atomA, atomB}, {4, 4}, Rb, g);
  for (int64_t t = 2; t < 6; ++t) CHECK(x.at2(0, t) == 2.0);
  for (int64_t t = 6; t < 8; ++t) CHECK(x.at2(0, t) == 5.0);
}

TEST_CASE("synthesize: truncation at the right edge") {
  Tensor R({1, 4});
  R.at2(0, 2) = 1.0;  // width 3 would extend to 5; timeline ends at 4
  Tensor g = wta_gate(R, {3}, {0.0});
  Tensor x = synthesize(std::vector<Tensor>{two_channel_atom()}, {3}, R, g);
  CHECK(x.at2(0, 2) == 1.0);
  CHECK(x.at2(0, 3) == 2.0);
}

TEST_CASE("synthesize: linear in R for a fixed gate") {
  Rng rng(9);
  std::vector<Tensor> atoms{rng.normal_tensor({2, 3}, 1.0), rng.normal_tensor({2, 4}, 1.0)};
  // pad to common K by construction: use per-atom widths directly
  std::vector<int> widths{3, 4};
  Tensor R1({2, 10}), R2({2, 10});
  for (double& v : R1.data) v = rng.uniform();
  for (double& v : R2.data) v = rng.uniform();
  Tensor gate = Tensor::full({2, 10}, 1.0);  // fixed (unnormalized) ownership
  double a = 0.3, b = 1.7;
  Tensor Rmix({2, 10});
  for (int64_t i = 0; i < Rmix.numel(); ++i) Rmix[i] = a * R1[i] + b * R2[i];
  Tensor xa = synthesize(atoms, widths, R1, gate);
  Tensor xb = synthesize(atoms, widths, R2, gate);
  Tensor xm = synthesize(atoms, widths, Rmix, gate);
  for (int64_t i = 0; i < xm.numel(); ++i)
    CHECK(xm[i] == doctest::Approx(a * xa[i] + b * xb[i]).epsilon(1e-12));
}

TEST_CASE("tape gate matches the plain gate in hard mode") {
  Rng rng(11);
  Tensor R({3, 10});
  for (double& v : R.data) v = rng.bernoulli(0.25) ? rng.uniform(0.3, 1.0) : 0.0;
  std::vector<int> widths{3, 2, 4};
  Tensor gamma({3}, {0.2, 0.0, -0.1});
  std::vector<double> gvec{0.2, 0.0, -0.1};
  ad::Tape t;
  ad::Val rv = t.leaf(R);
  ad::Val gv = t.leaf(gamma);
  ad::Val gate = wta_gate_node(t, rv, gv, widths, EvalMode::Hard);
  Tensor plain = wta_gate(R, widths, gvec);
  for (int64_t i = 0; i < plain.numel(); ++i) CHECK(t.val(gate)[i] == plain[i]);
}

TEST_CASE("tape synthesize matches the plain synthesize") {
  Rng rng(12);
  int M = 2, C = 2, K = 4, L = 9;
  Tensor masked = rng.normal_tensor({M, C, K}, 1.0);
  Tensor R({M, L});
  for (double& v : R.data) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  std::vector<int> widths{3, 4};
  Tensor gate = wta_gate(R, widths, {0.0, 0.0});
  ad::Tape t;
  ad::Val out = synthesize_node(t, t.leaf(masked), t.leaf(R), t.leaf(gate), widths);
  Tensor plain = synthesize(masked, widths, R, gate);
  for (int64_t i = 0; i < plain.numel(); ++i)
    CHECK(t.val(out)[i] == doctest::Approx(plain[i]).epsilon(1e-12));
}
