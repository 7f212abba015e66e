#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ppsvm/errors.hpp"

namespace ppsvm {

enum class KernelKind { Rbf, Linear, Polynomial, RationalQuadratic, Wave };

// Class 1: value depends only on ||x - y||. Class 2: value depends only on
// <x, y>. Both are preserved by orthogonal transforms, which is the whole
// point of the toolkit.
enum class KernelClass { Class1Isotropic, Class2InnerProduct, Other };

struct KernelSpec {
  KernelKind kind = KernelKind::Linear;
  double gamma = 1.0;  // Rbf width
  int degree = 2;      // Polynomial exponent
  double c = 1.0;      // RationalQuadratic offset
  double theta = 1.0;  // Wave period

  static KernelSpec rbf(double gamma);
  static KernelSpec linear();
  static KernelSpec polynomial(int degree);
  static KernelSpec rational_quadratic(double c);
  static KernelSpec wave(double theta);
};

std::string_view to_string(KernelKind k);
KernelKind kernel_kind_from_string(std::string_view s);

KernelClass kernel_class(const KernelSpec& spec);

double eval_kernel(const KernelSpec& spec, std::span<const double> x,
                   std::span<const double> y);

struct GramMatrix {
  std::size_t n = 0;
  std::vector<double> entries;  // row-major n*n

  double at(std::size_t i, std::size_t j) const { return entries[i * n + j]; }
};

GramMatrix gram(const KernelSpec& spec, const std::vector<std::vector<double>>& xs);

void to_json(nlohmann::json& j, const KernelSpec& spec);
void from_json(const nlohmann::json& j, KernelSpec& spec);

}  // namespace ppsvm
