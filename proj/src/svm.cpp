#include "ppsvm/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ppsvm/rng.hpp"
#include "ppsvm/vecmath.hpp"

namespace ppsvm {

double dual_objective(std::span<const double> alphas, std::span<const int> labels,
                      const GramMatrix& g) {
  const std::size_t n = alphas.size();
  double lin = 0.0, quad = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    lin += alphas[a];
    for (std::size_t b = 0; b < n; ++b)
      quad += alphas[a] * alphas[b] * labels[a] * labels[b] * g.at(a, b);
  }
  return lin - 0.5 * quad;
}

namespace {

// Two-variable SMO on the box-constrained dual. First choice is the worst
// KKT violator (lowest index on ties), second choice maximizes |E1 - E2|,
// with a seeded random-start sweep as fallback when the analytic step
// cannot move.
class Smo {
 public:
  // The loop drives violations well below the requested tolerance when it
  // can. Training problems that differ only in the last bits of their Gram
  // entries (plain vs orthogonally transformed data) then land on the same
  // optimum instead of on whichever side of the kkt_tol fence each path
  // happened to stop, which is what makes protected and plain models agree
  // to ~1e-9 rather than ~kkt_tol. The converged flag still reports the
  // tolerance the caller asked for.
  static constexpr double kPolishTol = 1e-9;

  Smo(const LabeledSet& data, const KernelSpec& kernel, const SolverConfig& cfg,
      const GramMatrix* shared_gram)
      : data_(data), kernel_(kernel), cfg_(cfg), n_(data.vectors.size()),
        solve_tol_(std::min(cfg.kkt_tol, kPolishTol)), rng_(cfg.seed) {
    alpha_.assign(n_, 0.0);
    g_.assign(n_, 0.0);
    if (shared_gram) {
      gram_ = shared_gram;
    } else if (n_ <= 4096) {
      own_gram_ = gram(kernel, data.vectors);
      gram_ = &own_gram_;
    }
  }

  SvmModel run() {
    solve();
    polish_equality();
    const double b = bias_estimate();

    SvmModel m;
    m.kernel = kernel_;
    m.bias = b;
    m.c_param = cfg_.c_param;
    m.converged = max_violation(b) <= cfg_.kkt_tol;
    for (std::size_t k = 0; k < n_; ++k) {
      if (alpha_[k] > 0.0) {
        m.support_vectors.push_back(data_.vectors[k]);
        m.alphas.push_back(alpha_[k]);
        m.labels.push_back(data_.labels[k]);
      }
    }
    return m;
  }

 private:
  double K(std::size_t i, std::size_t j) const {
    if (gram_) return gram_->at(i, j);
    return eval_kernel(kernel_, data_.vectors[i], data_.vectors[j]);
  }

  bool is_free(std::size_t k) const {
    return alpha_[k] > 0.0 && alpha_[k] < cfg_.c_param;
  }

  // Mean of y_k - g_k over free multipliers; otherwise the midpoint of the
  // interval the box-bound points leave feasible for b.
  double bias_estimate() const {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (std::size_t k = 0; k < n_; ++k) {
      if (is_free(k)) {
        sum += data_.labels[k] - g_[k];
        ++cnt;
      }
    }
    if (cnt > 0) return sum / static_cast<double>(cnt);

    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_; ++k) {
      const double v = data_.labels[k] - g_[k];
      const bool at_zero = alpha_[k] <= 0.0;
      if ((at_zero && data_.labels[k] > 0) || (!at_zero && data_.labels[k] < 0))
        lo = std::max(lo, v);
      else
        hi = std::min(hi, v);
    }
    if (std::isinf(lo) && std::isinf(hi)) return 0.0;
    if (std::isinf(lo)) return hi;
    if (std::isinf(hi)) return lo;
    return 0.5 * (lo + hi);
  }

  double violation(std::size_t k, double b) const {
    const double margin = data_.labels[k] * (g_[k] + b) - 1.0;
    if (alpha_[k] <= 0.0) return std::max(0.0, -margin);
    if (alpha_[k] >= cfg_.c_param) return std::max(0.0, margin);
    return std::fabs(margin);
  }

  double max_violation(double b) const {
    double vmax = 0.0;
    for (std::size_t k = 0; k < n_; ++k) vmax = std::max(vmax, violation(k, b));
    return vmax;
  }

  bool take_step(std::size_t i, std::size_t j) {
    if (i == j) return false;
    const double C = cfg_.c_param;
    const double ai = alpha_[i], aj = alpha_[j];
    const int yi = data_.labels[i], yj = data_.labels[j];
    const double ei = g_[i] - yi, ej = g_[j] - yj;

    double L, H;
    if (yi != yj) {
      L = std::max(0.0, aj - ai);
      H = std::min(C, C + aj - ai);
    } else {
      L = std::max(0.0, ai + aj - C);
      H = std::min(C, ai + aj);
    }
    if (L >= H) return false;

    const double eta = K(i, i) + K(j, j) - 2.0 * K(i, j);
    const double slope = yj * (ei - ej);
    double aj_new;
    if (eta > 1e-12) {
      aj_new = aj + slope / eta;
      if (aj_new < L) aj_new = L;
      else if (aj_new > H) aj_new = H;
    } else {
      // Flat or concave-up along the constraint line: best value sits at an
      // end of the box segment.
      const double dl = L - aj, dh = H - aj;
      const double obj_l = slope * dl - 0.5 * eta * dl * dl;
      const double obj_h = slope * dh - 0.5 * eta * dh * dh;
      const double eps = 1e-12 * std::max({1.0, std::fabs(obj_l), std::fabs(obj_h)});
      if (obj_l > obj_h + eps) aj_new = L;
      else if (obj_h > obj_l + eps) aj_new = H;
      else return false;
    }

    // Multipliers whose exact value is a box bound can come out of the
    // update a few ulp inside it; left unsnapped they masquerade as free
    // points and poison the bias estimate.
    const double band = 1e-13 * std::max(1.0, C);
    if (aj_new <= band) aj_new = 0.0;
    else if (C - aj_new <= band) aj_new = C;

    if (std::fabs(aj_new - aj) < 1e-10 * (std::fabs(aj_new) + std::fabs(aj) + 1.0))
      return false;

    double ai_new = ai + yi * yj * (aj - aj_new);
    if (ai_new <= band) ai_new = 0.0;
    else if (ai_new >= C - band) ai_new = C;

    const double di = (ai_new - ai) * yi;
    const double dj = (aj_new - aj) * yj;
    for (std::size_t k = 0; k < n_; ++k) g_[k] += di * K(i, k) + dj * K(j, k);
    alpha_[i] = ai_new;
    alpha_[j] = aj_new;
    return true;
  }

  bool try_partners(std::size_t i1) {
    const double e1 = g_[i1] - data_.labels[i1];
    std::size_t best = n_;
    double best_gap = -1.0;
    for (std::size_t k = 0; k < n_; ++k) {
      if (k == i1) continue;
      const double gap = std::fabs(e1 - (g_[k] - data_.labels[k]));
      if (gap > best_gap) {
        best_gap = gap;
        best = k;
      }
    }
    if (best < n_ && take_step(i1, best)) return true;

    const std::size_t start = rng_.bounded(n_);
    for (std::size_t t = 0; t < n_; ++t) {
      const std::size_t j = (start + t) % n_;
      if (j == i1 || j == best) continue;
      if (take_step(i1, j)) return true;
    }
    return false;
  }

  void solve() {
    int quiet = 0;
    for (long iter = 0; iter < cfg_.max_iters; ++iter) {
      const double b = bias_estimate();
      std::size_t i1 = n_;
      double vmax = 0.0;
      for (std::size_t k = 0; k < n_; ++k) {
        const double v = violation(k, b);
        if (v > vmax) {
          vmax = v;
          i1 = k;
        }
      }
      if (vmax <= solve_tol_) return;

      bool progressed = try_partners(i1);

      // Sweep the remaining violators in decreasing order, each getting an
      // attempt. Skipping the sweep whenever the worst violator moved would
      // let one point making near-zero steps starve the pairs that can
      // actually close the gap, and the solver would spin to the iteration
      // cap while still far from the optimum.
      std::vector<std::size_t> order;
      for (std::size_t k = 0; k < n_; ++k)
        if (k != i1 && violation(k, b) > solve_tol_) order.push_back(k);
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
        const double va = violation(a, b), vc = violation(c, b);
        if (va != vc) return va > vc;
        return a < c;
      });
      for (std::size_t k : order)
        if (try_partners(k)) progressed = true;
      if (progressed) {
        quiet = 0;
        continue;
      }
      if (++quiet >= cfg_.max_passes) return;
    }
  }

  // Drives sum(alpha_k y_k) to within a few ulp of zero by shifting the most
  // interior free multiplier. An exactly-zero float sum is generally not
  // representable; the residual left here is ~1e-15 relative.
  void polish_equality() {
    for (int round = 0; round < 4; ++round) {
      double s = 0.0, comp = 0.0, total_alpha = 0.0;
      for (std::size_t k = 0; k < n_; ++k) {
        total_alpha += alpha_[k];
        const double term = alpha_[k] * data_.labels[k];
        const double t = s + term;
        if (std::fabs(s) >= std::fabs(term))
          comp += (s - t) + term;
        else
          comp += (term - t) + s;
        s = t;
      }
      const double drift = s + comp;
      if (std::fabs(drift) <= 1e-13 * std::max(1.0, total_alpha)) return;

      std::size_t f = n_;
      double depth = 0.0;
      for (std::size_t k = 0; k < n_; ++k) {
        if (!is_free(k)) continue;
        const double dk = std::min(alpha_[k], cfg_.c_param - alpha_[k]);
        if (dk > depth) {
          depth = dk;
          f = k;
        }
      }
      if (f == n_) return;
      const double cand = alpha_[f] - data_.labels[f] * drift;
      if (cand <= 0.0 || cand >= cfg_.c_param) return;
      const double d = (cand - alpha_[f]) * data_.labels[f];
      for (std::size_t k = 0; k < n_; ++k) g_[k] += d * K(f, k);
      alpha_[f] = cand;
    }
  }

  const LabeledSet& data_;
  const KernelSpec& kernel_;
  const SolverConfig& cfg_;
  const std::size_t n_;
  const double solve_tol_;
  Rng rng_;
  std::vector<double> alpha_;
  std::vector<double> g_;  // g_k = sum_j alpha_j y_j K(k, j)
  GramMatrix own_gram_;
  const GramMatrix* gram_ = nullptr;
};

void validate_training_inputs(const LabeledSet& data, const SolverConfig& cfg) {
  if (cfg.c_param <= 0.0) throw Error("c_param must be positive");
  if (cfg.kkt_tol <= 0.0) throw Error("kkt_tol must be positive");
  if (cfg.max_iters < 1 || cfg.max_passes < 1)
    throw Error("iteration limits must be positive");
  if (data.vectors.size() != data.labels.size() ||
      (!data.ids.empty() && data.ids.size() != data.vectors.size()))
    throw DimensionMismatch("labeled set arrays are not parallel");

  bool pos = false, neg = false;
  const std::size_t d = data.vectors.empty() ? 0 : data.vectors.front().size();
  for (std::size_t k = 0; k < data.vectors.size(); ++k) {
    if (data.labels[k] != 1 && data.labels[k] != -1)
      throw Error("labels must be +1 or -1");
    (data.labels[k] == 1 ? pos : neg) = true;
    if (data.vectors[k].size() != d)
      throw DimensionMismatch("training vectors have mixed lengths");
    if (!all_finite(data.vectors[k]))
      throw NonFiniteInput("training vector has non-finite entries");
  }
  if (!pos || !neg)
    throw SingleClassData("training data must contain both labels");
}

SvmModel train_with_optional_gram(const LabeledSet& data, const KernelSpec& kernel,
                                  const SolverConfig& cfg,
                                  const GramMatrix* shared_gram) {
  validate_training_inputs(data, cfg);
  Smo solver(data, kernel, cfg, shared_gram);
  return solver.run();
}

std::vector<std::size_t> canonical_order(const std::vector<ProtectedTemplate>& ts) {
  std::vector<std::size_t> idx(ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) idx[k] = k;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (ts[a].client_id != ts[b].client_id) return ts[a].client_id < ts[b].client_id;
    return ts[a].sample_id < ts[b].sample_id;
  });
  return idx;
}

}  // namespace

SvmModel train_binary(const LabeledSet& data, const KernelSpec& kernel,
                      const SolverConfig& cfg) {
  return train_with_optional_gram(data, kernel, cfg, nullptr);
}

double decision_score(const SvmModel& model, std::span<const double> x) {
  if (!model.support_vectors.empty() &&
      model.support_vectors.front().size() != x.size())
    throw DimensionMismatch("query length does not match model dimension");
  double s = model.bias;
  for (std::size_t k = 0; k < model.support_vectors.size(); ++k)
    s += model.alphas[k] * model.labels[k] *
         eval_kernel(model.kernel, model.support_vectors[k], x);
  return s;
}

int classify(const SvmModel& model, std::span<const double> x) {
  return decision_score(model, x) > 0.0 ? 1 : -1;
}

SvmModel train_client_model(const std::vector<ProtectedTemplate>& templates,
                            const std::string& client_id, const KernelSpec& kernel,
                            const SolverConfig& cfg) {
  const auto order = canonical_order(templates);
  LabeledSet data;
  std::string key;
  bool has_client = false;
  for (std::size_t k : order) {
    const auto& t = templates[k];
    data.vectors.push_back(t.values);
    data.labels.push_back(t.client_id == client_id ? 1 : -1);
    data.ids.emplace_back(t.client_id, t.sample_id);
    if (t.client_id == client_id && !has_client) {
      has_client = true;
      key = t.key_id;
    }
  }
  if (!has_client) throw UnknownClient("no templates for client " + client_id);

  try {
    SvmModel m = train_with_optional_gram(data, kernel, cfg, nullptr);
    m.trained_on_key = key;
    return m;
  } catch (const SingleClassData& e) {
    throw SingleClassData("client " + client_id + ": " + e.what());
  } catch (const DimensionMismatch& e) {
    throw DimensionMismatch("client " + client_id + ": " + e.what());
  } catch (const NonFiniteInput& e) {
    throw NonFiniteInput("client " + client_id + ": " + e.what());
  }
}

std::map<std::string, SvmModel> train_one_vs_rest(
    const std::vector<ProtectedTemplate>& templates, const KernelSpec& kernel,
    const SolverConfig& cfg) {
  std::set<std::string> clients;
  for (const auto& t : templates) clients.insert(t.client_id);
  if (clients.size() < 2)
    throw SingleClassData("one-vs-rest needs at least 2 distinct clients");

  // All per-client problems share vectors; build the set and Gram once.
  const auto order = canonical_order(templates);
  LabeledSet data;
  for (std::size_t k : order) {
    const auto& t = templates[k];
    data.vectors.push_back(t.values);
    data.labels.push_back(-1);
    data.ids.emplace_back(t.client_id, t.sample_id);
  }
  GramMatrix shared;
  const bool use_shared = data.vectors.size() <= 4096;
  if (use_shared) shared = gram(kernel, data.vectors);

  std::map<std::string, SvmModel> models;
  for (const auto& c : clients) {
    std::string key;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto& t = templates[order[k]];
      data.labels[k] = t.client_id == c ? 1 : -1;
      if (t.client_id == c && key.empty()) key = t.key_id;
    }
    try {
      SvmModel m = train_with_optional_gram(data, kernel, cfg,
                                            use_shared ? &shared : nullptr);
      m.trained_on_key = key;
      models.emplace(c, std::move(m));
    } catch (const SingleClassData& e) {
      throw SingleClassData("client " + c + ": " + e.what());
    } catch (const NonFiniteInput& e) {
      throw NonFiniteInput("client " + c + ": " + e.what());
    }
  }
  return models;
}

AuthResult authenticate(const SvmModel& model, const ProtectedTemplate& query,
                        double tau) {
  AuthResult r;
  r.score = decision_score(model, query.values);
  r.accept = r.score >= tau;
  return r;
}

}  // namespace ppsvm
