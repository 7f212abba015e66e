#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppsvm/errors.hpp"

namespace ppsvm {

enum class TransformKind { Permutation, GramSchmidt, Identity };

std::string_view to_string(TransformKind k);
TransformKind transform_kind_from_string(std::string_view s);

// A client secret: expands deterministically to one orthogonal matrix.
struct TransformKey {
  std::string key_id;
  std::uint64_t seed = 0;
  TransformKind kind = TransformKind::Identity;
  std::size_t dim = 0;
};

struct Template {
  std::string client_id;
  std::string sample_id;
  std::vector<double> values;
};

struct ProtectedTemplate {
  std::string client_id;
  std::string sample_id;
  std::string key_id;
  std::vector<double> values;
};

// Orthogonal matrix with storage matched to its origin: a dense row-major
// buffer for Gram-Schmidt matrices, a bare index array for permutations
// (y[i] = x[index[i]]), nothing at all for the identity.
class OrthogonalMatrix {
 public:
  static OrthogonalMatrix identity(std::size_t dim);
  static OrthogonalMatrix permutation(std::vector<std::uint32_t> index);
  static OrthogonalMatrix dense(std::size_t dim, std::vector<double> row_major);

  std::size_t dim() const { return dim_; }
  TransformKind kind() const { return kind_; }

  std::vector<double> apply(std::span<const double> x) const;

  // Permutation storage; empty unless kind() == Permutation.
  const std::vector<std::uint32_t>& index() const { return index_; }
  // Dense row-major storage; empty unless kind() == GramSchmidt.
  const std::vector<double>& data() const { return data_; }

 private:
  OrthogonalMatrix() = default;

  std::size_t dim_ = 0;
  TransformKind kind_ = TransformKind::Identity;
  std::vector<std::uint32_t> index_;
  std::vector<double> data_;
};

OrthogonalMatrix expand_key(const TransformKey& key);

ProtectedTemplate protect(const Template& t, const TransformKey& key);
std::vector<ProtectedTemplate> protect_batch(const std::vector<Template>& ts,
                                             const TransformKey& key);

}  // namespace ppsvm
