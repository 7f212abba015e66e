#include "ppsvm/transform.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <tuple>

#include "ppsvm/rng.hpp"
#include "ppsvm/vecmath.hpp"

namespace ppsvm {

std::string_view to_string(TransformKind k) {
  switch (k) {
    case TransformKind::Permutation: return "permutation";
    case TransformKind::GramSchmidt: return "gram_schmidt";
    case TransformKind::Identity: return "identity";
  }
  return "identity";
}

TransformKind transform_kind_from_string(std::string_view s) {
  if (s == "permutation") return TransformKind::Permutation;
  if (s == "gram_schmidt") return TransformKind::GramSchmidt;
  if (s == "identity") return TransformKind::Identity;
  throw ParseError("unknown transform kind: " + std::string(s));
}

OrthogonalMatrix OrthogonalMatrix::identity(std::size_t dim) {
  OrthogonalMatrix m;
  m.dim_ = dim;
  m.kind_ = TransformKind::Identity;
  return m;
}

OrthogonalMatrix OrthogonalMatrix::permutation(std::vector<std::uint32_t> index) {
  OrthogonalMatrix m;
  m.dim_ = index.size();
  m.kind_ = TransformKind::Permutation;
  m.index_ = std::move(index);
  return m;
}

OrthogonalMatrix OrthogonalMatrix::dense(std::size_t dim,
                                         std::vector<double> row_major) {
  if (row_major.size() != dim * dim)
    throw DimensionMismatch("dense matrix storage size != dim*dim");
  OrthogonalMatrix m;
  m.dim_ = dim;
  m.kind_ = TransformKind::GramSchmidt;
  m.data_ = std::move(row_major);
  return m;
}

std::vector<double> OrthogonalMatrix::apply(std::span<const double> x) const {
  if (x.size() != dim_)
    throw DimensionMismatch("vector length does not match matrix dimension");
  switch (kind_) {
    case TransformKind::Identity:
      return std::vector<double>(x.begin(), x.end());
    case TransformKind::Permutation: {
      std::vector<double> y(dim_);
      for (std::size_t i = 0; i < dim_; ++i) y[i] = x[index_[i]];
      return y;
    }
    case TransformKind::GramSchmidt: {
      std::vector<double> y(dim_);
      for (std::size_t r = 0; r < dim_; ++r)
        y[r] = dot({data_.data() + r * dim_, dim_}, x);
      return y;
    }
  }
  throw Error("unreachable");
}

namespace {

std::vector<std::uint32_t> random_permutation(std::size_t d, Rng& rng) {
  std::vector<std::uint32_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0u);
  for (std::size_t i = d; i > 1; --i) {
    const std::size_t j = rng.bounded(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// Modified Gram-Schmidt over the columns of a random Gaussian matrix.
// Columns live contiguously (column-major scratch); the result is
// transposed into row-major at the end. Columns that collapse under
// projection are redrawn from the generator, up to 8 attempts each.
std::vector<double> gram_schmidt_matrix(std::size_t d, Rng& rng) {
  constexpr double kMinNorm = 1e-12;
  std::vector<double> cols(d * d);
  for (auto& v : cols) v = rng.next_normal();

  const int sweeps = d > 128 ? 2 : 1;
  for (std::size_t k = 0; k < d; ++k) {
    double* vk = cols.data() + k * d;
    int attempts = 0;
    double norm = 0.0;
    for (;;) {
      for (int pass = 0; pass < sweeps; ++pass) {
        for (std::size_t j = 0; j < k; ++j) {
          const double* qj = cols.data() + j * d;
          double r = 0.0;
          for (std::size_t i = 0; i < d; ++i) r += qj[i] * vk[i];
          for (std::size_t i = 0; i < d; ++i) vk[i] -= r * qj[i];
        }
      }
      norm = std::sqrt(dot({vk, d}, {vk, d}));
      if (norm >= kMinNorm) break;
      if (++attempts > 8)
        throw DegenerateMatrix("column collapsed during orthonormalization");
      for (std::size_t i = 0; i < d; ++i) vk[i] = rng.next_normal();
    }
    const double inv = 1.0 / norm;
    for (std::size_t i = 0; i < d; ++i) vk[i] *= inv;
  }

  std::vector<double> row_major(d * d);
  for (std::size_t c = 0; c < d; ++c)
    for (std::size_t r = 0; r < d; ++r) row_major[r * d + c] = cols[c * d + r];
  return row_major;
}

OrthogonalMatrix expand_uncached(const TransformKey& key) {
  if (key.dim < 1) throw DimensionMismatch("key dimension must be >= 1");
  switch (key.kind) {
    case TransformKind::Identity:
      return OrthogonalMatrix::identity(key.dim);
    case TransformKind::Permutation: {
      Rng rng(key.seed);
      return OrthogonalMatrix::permutation(random_permutation(key.dim, rng));
    }
    case TransformKind::GramSchmidt: {
      Rng rng(key.seed);
      return OrthogonalMatrix::dense(key.dim, gram_schmidt_matrix(key.dim, rng));
    }
  }
  throw Error("unreachable");
}

// Read-mostly expansion cache. Purely an optimization: entries are immutable
// and keyed by everything that determines the matrix.
std::shared_ptr<const OrthogonalMatrix> expand_cached(const TransformKey& key) {
  using CacheKey = std::tuple<std::uint64_t, TransformKind, std::size_t>;
  static std::mutex mu;
  static std::map<CacheKey, std::shared_ptr<const OrthogonalMatrix>> cache;

  const CacheKey ck{key.seed, key.kind, key.dim};
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(ck);
    if (it != cache.end()) return it->second;
  }
  auto m = std::make_shared<const OrthogonalMatrix>(expand_uncached(key));
  std::lock_guard<std::mutex> lock(mu);
  if (cache.size() >= 64) cache.clear();
  return cache.emplace(ck, std::move(m)).first->second;
}

ProtectedTemplate protect_with(const OrthogonalMatrix& q, const Template& t,
                               const TransformKey& key) {
  if (t.values.size() != key.dim)
    throw DimensionMismatch("template length " + std::to_string(t.values.size()) +
                            " != key dimension " + std::to_string(key.dim));
  if (!all_finite(t.values)) throw NonFiniteInput("template has non-finite entries");
  ProtectedTemplate p;
  p.client_id = t.client_id;
  p.sample_id = t.sample_id;
  p.key_id = key.key_id;
  p.values = q.apply(t.values);
  return p;
}

}  // namespace

OrthogonalMatrix expand_key(const TransformKey& key) {
  return expand_uncached(key);
}

ProtectedTemplate protect(const Template& t, const TransformKey& key) {
  auto q = expand_cached(key);
  return protect_with(*q, t, key);
}

std::vector<ProtectedTemplate> protect_batch(const std::vector<Template>& ts,
                                             const TransformKey& key) {
  auto q = expand_cached(key);
  std::vector<ProtectedTemplate> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.push_back(protect_with(*q, t, key));
  return out;
}

}  // namespace ppsvm
