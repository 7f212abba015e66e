#include <cmath>
#include <vector>

#include <doctest.h>
#include <json.hpp>

#include "ppsvm/kernels.hpp"
#include "ppsvm/rng.hpp"
#include "ppsvm/transform.hpp"

#include "oracles.hpp"

using namespace ppsvm;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.next_normal();
  return v;
}

oracle::KernelParams mirror(const KernelSpec& s) {
  oracle::KernelParams p;
  switch (s.kind) {
    case KernelKind::Rbf: p.form = oracle::KernelForm::Rbf; break;
    case KernelKind::Linear: p.form = oracle::KernelForm::Linear; break;
    case KernelKind::Polynomial: p.form = oracle::KernelForm::Polynomial; break;
    case KernelKind::RationalQuadratic:
      p.form = oracle::KernelForm::RationalQuadratic;
      break;
    case KernelKind::Wave: p.form = oracle::KernelForm::Wave; break;
  }
  p.gamma = s.gamma;
  p.degree = s.degree;
  p.c = s.c;
  p.theta = s.theta;
  return p;
}

const std::vector<KernelSpec> kAllKernels = {
    KernelSpec::rbf(0.7),          KernelSpec::linear(),
    KernelSpec::polynomial(3),     KernelSpec::rational_quadratic(2.5),
    KernelSpec::wave(1.3),
};

}  // namespace

TEST_CASE("hand-checked kernel values") {
  const std::vector<double> a = {1.0, 2.0};
  const std::vector<double> b = {3.0, 4.0};

  // squared distance is 8, so gamma = 1/8 lands exactly on exp(-1)
  CHECK(eval_kernel(KernelSpec::rbf(0.125), a, b) ==
        doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(eval_kernel(KernelSpec::linear(), a, b) == 11.0);
  // <x, y> = 1 here, so degree 2 gives (1 + 1)^2 = 4
  const std::vector<double> u = {1.0, 0.0};
  const std::vector<double> v = {1.0, 5.0};
  CHECK(eval_kernel(KernelSpec::polynomial(2), u, v) == doctest::Approx(4.0));
  // d2 = 8, c = 8 -> 1 - 8/16 = 0.5
  CHECK(eval_kernel(KernelSpec::rational_quadratic(8.0), a, b) ==
        doctest::Approx(0.5).epsilon(1e-15));
  // coincident points hit the wave kernel's removable singularity
  CHECK(eval_kernel(KernelSpec::wave(0.4), a, a) == 1.0);
}

TEST_CASE("library evaluation matches the independent oracle") {
  Rng rng(11);
  for (const auto& spec : kAllKernels) {
    const auto params = mirror(spec);
    for (int rep = 0; rep < 25; ++rep) {
      const auto x = random_vector(rng, 12);
      const auto y = random_vector(rng, 12);
      CHECK(eval_kernel(spec, x, y) ==
            doctest::Approx(oracle::kernel_value(params, x, y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("kernel values are invariant under orthogonal transforms") {
  Rng rng(99);
  for (auto kind : {TransformKind::Permutation, TransformKind::GramSchmidt}) {
    TransformKey key{"k:t", 321, kind, 16};
    const auto q = expand_key(key);
    for (const auto& spec : kAllKernels) {
      for (int rep = 0; rep < 10; ++rep) {
        const auto x = random_vector(rng, 16);
        const auto y = random_vector(rng, 16);
        const double before = eval_kernel(spec, x, y);
        const double after = eval_kernel(spec, q.apply(x), q.apply(y));
        CHECK(after == doctest::Approx(before).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("kernels are symmetric in their arguments") {
  Rng rng(5);
  for (const auto& spec : kAllKernels) {
    for (int rep = 0; rep < 10; ++rep) {
      const auto x = random_vector(rng, 9);
      const auto y = random_vector(rng, 9);
      CHECK(eval_kernel(spec, x, y) == eval_kernel(spec, y, x));
    }
  }
}

TEST_CASE("kernel classes sort by what the value depends on") {
  CHECK(kernel_class(KernelSpec::rbf(1.0)) == KernelClass::Class1Isotropic);
  CHECK(kernel_class(KernelSpec::rational_quadratic(1.0)) ==
        KernelClass::Class1Isotropic);
  CHECK(kernel_class(KernelSpec::wave(1.0)) == KernelClass::Class1Isotropic);
  CHECK(kernel_class(KernelSpec::linear()) == KernelClass::Class2InnerProduct);
  CHECK(kernel_class(KernelSpec::polynomial(4)) ==
        KernelClass::Class2InnerProduct);
}

TEST_CASE("rbf gram matrices are positive semidefinite") {
  Rng rng(314);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 20; ++i) xs.push_back(random_vector(rng, 8));
  const auto g = gram(KernelSpec::rbf(0.5), xs);

  std::vector<std::vector<double>> m(g.n, std::vector<double>(g.n));
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j = 0; j < g.n; ++j) m[i][j] = g.at(i, j);
  CHECK(oracle::min_eigenvalue(m) >= -1e-10);
}

TEST_CASE("gram agrees entrywise with direct evaluation") {
  Rng rng(8);
  std::vector<std::vector<double>> xs;
  for (int i = 0; i < 7; ++i) xs.push_back(random_vector(rng, 5));
  for (const auto& spec : kAllKernels) {
    const auto g = gram(spec, xs);
    REQUIRE(g.n == xs.size());
    for (std::size_t i = 0; i < g.n; ++i) {
      for (std::size_t j = 0; j < g.n; ++j) {
        CHECK(g.at(i, j) == eval_kernel(spec, xs[i], xs[j]));
        CHECK(g.at(i, j) == g.at(j, i));
      }
    }
  }
}

TEST_CASE("wave kernel is continuous through its tiny-distance guard") {
  const std::vector<double> x = {0.3, -0.9, 2.0};
  for (double eps : {1e-5, 1e-7, 1e-10, 1e-13}) {
    std::vector<double> y = x;
    y[0] += eps;
    const double v = eval_kernel(KernelSpec::wave(1.0), x, y);
    CAPTURE(eps);
    CHECK(std::fabs(v - 1.0) <= 1e-6);
  }
}

TEST_CASE("kernel specs round-trip through json") {
  for (const auto& spec : kAllKernels) {
    nlohmann::json j = spec;
    const auto back = j.get<KernelSpec>();
    CHECK(back.kind == spec.kind);
    CHECK(back.gamma == spec.gamma);
    CHECK(back.degree == spec.degree);
    CHECK(back.c == spec.c);
    CHECK(back.theta == spec.theta);
  }
}

TEST_CASE("kernel argument validation") {
  const std::vector<double> a = {1.0, 2.0};
  const std::vector<double> b = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(eval_kernel(KernelSpec::linear(), a, b), DimensionMismatch);

  const std::vector<double> bad = {1.0, std::nan("")};
  CHECK_THROWS_AS(eval_kernel(KernelSpec::linear(), a, bad), NonFiniteInput);
  CHECK_THROWS_AS(kernel_kind_from_string("sigmoid"), ParseError);
}
