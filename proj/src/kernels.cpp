#include "ppsvm/kernels.hpp"

#include <cmath>

#include "ppsvm/vecmath.hpp"

namespace ppsvm {

KernelSpec KernelSpec::rbf(double gamma) {
  KernelSpec s;
  s.kind = KernelKind::Rbf;
  s.gamma = gamma;
  return s;
}

KernelSpec KernelSpec::linear() {
  KernelSpec s;
  s.kind = KernelKind::Linear;
  return s;
}

KernelSpec KernelSpec::polynomial(int degree) {
  KernelSpec s;
  s.kind = KernelKind::Polynomial;
  s.degree = degree;
  return s;
}

KernelSpec KernelSpec::rational_quadratic(double c) {
  KernelSpec s;
  s.kind = KernelKind::RationalQuadratic;
  s.c = c;
  return s;
}

KernelSpec KernelSpec::wave(double theta) {
  KernelSpec s;
  s.kind = KernelKind::Wave;
  s.theta = theta;
  return s;
}

std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::Rbf: return "rbf";
    case KernelKind::Linear: return "linear";
    case KernelKind::Polynomial: return "polynomial";
    case KernelKind::RationalQuadratic: return "rational_quadratic";
    case KernelKind::Wave: return "wave";
  }
  return "linear";
}

KernelKind kernel_kind_from_string(std::string_view s) {
  if (s == "rbf") return KernelKind::Rbf;
  if (s == "linear") return KernelKind::Linear;
  if (s == "polynomial") return KernelKind::Polynomial;
  if (s == "rational_quadratic") return KernelKind::RationalQuadratic;
  if (s == "wave") return KernelKind::Wave;
  throw ParseError("unknown kernel kind: " + std::string(s));
}

KernelClass kernel_class(const KernelSpec& spec) {
  switch (spec.kind) {
    case KernelKind::Rbf:
    case KernelKind::RationalQuadratic:
    case KernelKind::Wave:
      return KernelClass::Class1Isotropic;
    case KernelKind::Linear:
    case KernelKind::Polynomial:
      return KernelClass::Class2InnerProduct;
  }
  return KernelClass::Other;
}

double eval_kernel(const KernelSpec& spec, std::span<const double> x,
                   std::span<const double> y) {
  if (x.size() != y.size())
    throw DimensionMismatch("kernel arguments have different lengths");
  if (!all_finite(x) || !all_finite(y))
    throw NonFiniteInput("kernel argument has non-finite entries");
  switch (spec.kind) {
    case KernelKind::Rbf:
      return std::exp(-spec.gamma * squared_distance(x, y));
    case KernelKind::Linear:
      return dot(x, y);
    case KernelKind::Polynomial:
      return std::pow(1.0 + dot(x, y), spec.degree);
    case KernelKind::RationalQuadratic: {
      const double d2 = squared_distance(x, y);
      return 1.0 - d2 / (d2 + spec.c);
    }
    case KernelKind::Wave: {
      const double r = std::sqrt(squared_distance(x, y));
      if (r < 1e-12) return 1.0;
      return (spec.theta / r) * std::sin(r / spec.theta);
    }
  }
  throw Error("unreachable");
}

GramMatrix gram(const KernelSpec& spec, const std::vector<std::vector<double>>& xs) {
  GramMatrix g;
  g.n = xs.size();
  g.entries.assign(g.n * g.n, 0.0);
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = i; j < g.n; ++j) {
      const double v = eval_kernel(spec, xs[i], xs[j]);
      g.entries[i * g.n + j] = v;
      g.entries[j * g.n + i] = v;
    }
  }
  return g;
}

void to_json(nlohmann::json& j, const KernelSpec& spec) {
  nlohmann::json params = nlohmann::json::object();
  switch (spec.kind) {
    case KernelKind::Rbf: params["gamma"] = spec.gamma; break;
    case KernelKind::Linear: break;
    case KernelKind::Polynomial: params["degree"] = spec.degree; break;
    case KernelKind::RationalQuadratic: params["c"] = spec.c; break;
    case KernelKind::Wave: params["theta"] = spec.theta; break;
  }
  j = nlohmann::json{{"kind", to_string(spec.kind)}, {"params", params}};
}

void from_json(const nlohmann::json& j, KernelSpec& spec) {
  spec = KernelSpec{};
  spec.kind = kernel_kind_from_string(j.at("kind").get<std::string>());
  const auto& params = j.at("params");
  switch (spec.kind) {
    case KernelKind::Rbf: spec.gamma = params.at("gamma").get<double>(); break;
    case KernelKind::Linear: break;
    case KernelKind::Polynomial: spec.degree = params.at("degree").get<int>(); break;
    case KernelKind::RationalQuadratic: spec.c = params.at("c").get<double>(); break;
    case KernelKind::Wave: spec.theta = params.at("theta").get<double>(); break;
  }
}

}  // namespace ppsvm
