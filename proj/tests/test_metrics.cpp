#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "primflow/metrics.hpp"

using namespace primflow;
using namespace primflow::metrics;

TEST_CASE("ade/fde: zero on identical inputs") {
  Rng rng(1);
  Tensor a = rng.normal_tensor({2, 6}, 1.0);
  CHECK(ade(a, a) == doctest::Approx(0.0));
  CHECK(fde(a, a) == doctest::Approx(0.0));
}

TEST_CASE("ade/fde: constant offset of norm d") {
  Rng rng(2);
  Tensor gt = rng.normal_tensor({2, 5}, 1.0);
  Tensor pred = gt;
  // offset (0.3, 0.4): norm 0.5
  for (int64_t t = 0; t < 5; ++t) {
    pred.at2(0, t) += 0.3;
    pred.at2(1, t) += 0.4;
  }
  CHECK(ade(pred, gt) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fde(pred, gt) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ade: single final-step error averages to e/F") {
  Tensor gt({2, 4});
  Tensor pred = gt;
  pred.at2(0, 3) += 0.8;  // error norm 0.8 at the last step only
  CHECK(ade(pred, gt) == doctest::Approx(0.8 / 4.0));
  CHECK(fde(pred, gt) == doctest::Approx(0.8));
}

TEST_CASE("ratio: the reported 0.44/0.41 rounds to 1.07") {
  double ratio = 0.44 / 0.41;
  CHECK(ratio == doctest::Approx(1.0732).epsilon(1e-4));
  CHECK(std::round(ratio * 100.0) / 100.0 == doctest::Approx(1.07));
}

TEST_CASE("evaluate: ratio undefined at zero ade") {
  Rng rng(3);
  Tensor a = rng.normal_tensor({2, 6}, 1.0);
  auto rep = evaluate({{a, a}});
  CHECK(!rep.ratio_defined);
  CHECK(rep.n_samples == 1);
}

TEST_CASE("ratio is invariant under common scaling") {
  Rng rng(4);
  Tensor gt = rng.normal_tensor({2, 6}, 1.0);
  Tensor pred = rng.normal_tensor({2, 6}, 1.0);
  auto r1 = evaluate({{pred, gt}});
  double s = 3.7;
  Tensor gts = gt, preds = pred;
  for (double& v : gts.data) v *= s;
  for (double& v : preds.data) v *= s;
  auto r2 = evaluate({{preds, gts}});
  CHECK(r2.ade == doctest::Approx(s * r1.ade).epsilon(1e-12));
  CHECK(r2.fde == doctest::Approx(s * r1.fde).epsilon(1e-12));
  REQUIRE(r1.ratio_defined);
  CHECK(r2.ratio == doctest::Approx(r1.ratio).epsilon(1e-12));
}

namespace {
std::vector<Tensor> make_set(Rng& rng, int n, double shift) {
  std::vector<Tensor> out;
  for (int i = 0; i < n; ++i) {
    Tensor t = rng.normal_tensor({2, 10}, 1.0);
    for (double& v : t.data) v += shift;
    out.push_back(std::move(t));
  }
  return out;
}
}  // namespace

TEST_CASE("jsd: identical sets score ~0") {
  Rng rng(5);
  auto set = make_set(rng, 20, 0.0);
  auto bins = default_bins(set);
  auto rep = jsd(set, set, bins);
  CHECK(rep.jsd_bits <= 1e-6);
  CHECK(rep.n_generated == 20);
}

TEST_CASE("jsd: disjoint supports score ~1") {
  // disjoint in both feature blocks: positions far apart AND distinct
  // constant displacements
  std::vector<Tensor> a, b;
  for (int i = 0; i < 10; ++i) {
    a.push_back(Tensor::full({2, 10}, -5.0));  // still, at (-5,-5)
    Tensor ramp({2, 10});
    for (int64_t c = 0; c < 2; ++c)
      for (int64_t t = 0; t < 10; ++t) ramp.at2(c, t) = 5.0 + static_cast<double>(t);
    b.push_back(std::move(ramp));
  }
  std::vector<Tensor> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  auto bins = default_bins(pooled);
  auto rep = jsd(a, b, bins);
  CHECK(rep.jsd_bits >= 1.0 - 1e-5);
  CHECK(rep.jsd_bits <= 1.0 + 1e-12);
}

TEST_CASE("jsd: exactly symmetric for a fixed grid") {
  Rng rng(7);
  auto a = make_set(rng, 15, 0.0);
  auto b = make_set(rng, 25, 0.5);
  auto bins = default_bins(a);
  CHECK(jsd(a, b, bins).jsd_bits == doctest::Approx(jsd(b, a, bins).jsd_bits).epsilon(1e-15));
}

TEST_CASE("jsd: invariant to the ordering of set members") {
  Rng rng(8);
  auto a = make_set(rng, 12, 0.0);
  auto b = make_set(rng, 12, 0.3);
  auto bins = default_bins(a);
  double base = jsd(a, b, bins).jsd_bits;
  std::vector<Tensor> a2(a.rbegin(), a.rend());
  std::vector<Tensor> b2(b.rbegin(), b.rend());
  CHECK(jsd(a2, b2, bins).jsd_bits == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("jsd: nearby distributions score between the extremes") {
  Rng rng(9);
  auto a = make_set(rng, 40, 0.0);
  auto b = make_set(rng, 40, 0.4);
  std::vector<Tensor> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  auto bins = default_bins(pooled);
  double mid = jsd(a, b, bins).jsd_bits;
  CHECK(mid > 0.01);
  CHECK(mid < 0.9);
}
