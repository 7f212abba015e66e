// Acceptance gate: ten self-contained checks over the whole toolkit, one
// [PASS]/[FAIL] line each, nonzero exit when anything fails. Tolerances are
// pinned here and nowhere else.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppsvm/evalx.hpp"
#include "ppsvm/kernels.hpp"
#include "ppsvm/keyring.hpp"
#include "ppsvm/rng.hpp"
#include "ppsvm/service.hpp"
#include "ppsvm/store.hpp"
#include "ppsvm/svm.hpp"
#include "ppsvm/transform.hpp"
#include "ppsvm/vecmath.hpp"

#include "oracles.hpp"

using namespace ppsvm;
namespace fs = std::filesystem;

namespace {

// -- pinned tolerances -------------------------------------------------------
constexpr double kGeometryRelTol = 1e-9;   // distance/inner-product/cosine drift
constexpr double kOrthogonalityTol = 1e-10;  // max |Q^T Q - I|
constexpr double kKernelInvTol = 1e-9;     // |K(Qx,Qy) - K(x,y)|, relative
constexpr double kObjectiveTol = 1e-4;     // solver vs exhaustive optimum
constexpr double kObjectiveSlack = 1e-8;   // solver may not exceed the optimum
constexpr double kKktTol = 1e-3;           // independent KKT certificate
constexpr double kScoreMatchTol = 1e-6;    // protected vs plain score multisets
constexpr double kEerOracleTol = 1e-9;     // eer() vs brute-force enumeration
constexpr int kOrderingSeeds = 10;         // key/attack statistics sample size
constexpr int kOrderingNeeded = 9;         // seeds that must satisfy the ordering

std::vector<double> random_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.next_normal();
  return v;
}

// -- shared synthetic benchmark ----------------------------------------------
// 10 clients x 20 samples at dim 64, unit-normalized. The RBF width is tuned
// to that normalization: squared distances live in [0, 4], so gamma = 4 keeps
// the kernel responsive across the whole range.
constexpr std::size_t kBenchClients = 10;
constexpr std::size_t kBenchSamples = 20;
constexpr std::size_t kBenchDim = 64;
constexpr double kBenchGamma = 4.0;
constexpr double kRbfC = 34.0;
constexpr double kLinearC = 1.0;
constexpr std::uint64_t kBenchDataSeed = 2026;
constexpr std::uint64_t kBenchSplitSeed = 11;

const std::vector<Template>& bench_data() {
  static const std::vector<Template> ts = gen_synthetic(
      kBenchClients, kBenchSamples, kBenchDim, 1.0, 0.35, kBenchDataSeed);
  return ts;
}

std::vector<std::string> bench_clients() {
  std::set<std::string> s;
  for (const auto& t : bench_data()) s.insert(t.client_id);
  return {s.begin(), s.end()};
}

// Face-like corpus for the key-regime statistics: raw biometric features of
// different people share global structure (every face has the same gross
// layout), so impostor similarity is systematically high until a per-client
// transform scrambles it. Isotropic cluster data has no such shared component
// and the two key regimes become statistically identical, which is exactly
// the degenerate case the key-separation claims do not apply to. Every
// template here is shared direction + client axis + noise, unit-normalized.
constexpr double kClientAxis = 0.5;
constexpr double kCorrNoise = 0.12;
constexpr std::uint64_t kCorrDataSeed = 7001;

std::vector<Template> gen_correlated(std::size_t clients, std::size_t samples,
                                     std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  auto unit = [&] {
    auto v = random_vector(rng, dim);
    const double n = l2_norm(v);
    for (auto& x : v) x /= n;
    return v;
  };
  const auto shared = unit();
  std::vector<Template> out;
  char buf[32];
  for (std::size_t c = 0; c < clients; ++c) {
    const auto axis = unit();
    std::vector<double> mean(dim);
    for (std::size_t i = 0; i < dim; ++i)
      mean[i] = shared[i] + kClientAxis * axis[i];
    std::snprintf(buf, sizeof buf, "c%03zu", c);
    const std::string client_id = buf;
    for (std::size_t s = 0; s < samples; ++s) {
      Template t;
      t.client_id = client_id;
      std::snprintf(buf, sizeof buf, "s%03zu", s);
      t.sample_id = buf;
      t.values.resize(dim);
      for (std::size_t i = 0; i < dim; ++i)
        t.values[i] = mean[i] + kCorrNoise * rng.next_normal();
      const double n = l2_norm(t.values);
      for (auto& v : t.values) v /= n;
      out.push_back(std::move(t));
    }
  }
  return out;
}

const std::vector<Template>& corr_data() {
  static const std::vector<Template> ts = gen_correlated(
      kBenchClients, kBenchSamples, kBenchDim, kCorrDataSeed);
  return ts;
}

// -- small helpers -----------------------------------------------------------
struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

oracle::KernelParams mirror(const KernelSpec& k) {
  oracle::KernelParams p;
  switch (k.kind) {
    case KernelKind::Rbf: p.form = oracle::KernelForm::Rbf; break;
    case KernelKind::Linear: p.form = oracle::KernelForm::Linear; break;
    case KernelKind::Polynomial: p.form = oracle::KernelForm::Polynomial; break;
    case KernelKind::RationalQuadratic:
      p.form = oracle::KernelForm::RationalQuadratic;
      break;
    case KernelKind::Wave: p.form = oracle::KernelForm::Wave; break;
  }
  p.gamma = k.gamma;
  p.degree = k.degree;
  p.c = k.c;
  p.theta = k.theta;
  return p;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ppsvm_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// -- 1: geometry preservation -------------------------------------------------
Outcome check_geometry() {
  const std::size_t dims[] = {2, 16, 64, 256};
  const TransformKind kinds[] = {TransformKind::Permutation,
                                 TransformKind::GramSchmidt,
                                 TransformKind::Identity};
  Rng rng(101);
  double worst = 0.0;
  std::size_t triples = 0;
  for (TransformKind kind : kinds) {
    for (std::size_t dim : dims) {
      for (int rep = 0; rep < 250; ++rep) {
        const TransformKey key{"k", rng.next_u64(), kind, dim};
        const auto q = expand_key(key);
        const auto f = random_vector(rng, dim);
        const auto g = random_vector(rng, dim);
        const auto qf = q.apply(f);
        const auto qg = q.apply(g);
        ++triples;

        const double d0 = std::sqrt(squared_distance(f, g));
        const double d1 = std::sqrt(squared_distance(qf, qg));
        const double ip0 = dot(f, g);
        const double ip1 = dot(qf, qg);
        const double cos0 = ip0 / (l2_norm(f) * l2_norm(g));
        const double cos1 = ip1 / (l2_norm(qf) * l2_norm(qg));

        const std::pair<double, double> checks[] = {
            {d0, d1}, {ip0, ip1}, {cos0, cos1}};
        for (const auto& [a, b] : checks) {
          const double rel =
              std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
          worst = std::max(worst, rel);
        }
      }
    }
  }
  Outcome o;
  o.pass = worst <= kGeometryRelTol;
  o.detail = "max relative drift " + fmt("%.2e", worst) + " over " +
             std::to_string(triples) + " (f,g,key) triples, limit " +
             fmt("%.0e", kGeometryRelTol);
  return o;
}

// -- 2: orthogonality ---------------------------------------------------------
Outcome check_orthogonality() {
  const std::size_t dims[] = {2, 16, 64, 256};
  Rng rng(202);
  double worst = 0.0;
  int dense_keys = 0, perm_keys = 0;

  for (std::size_t dim : dims) {
    for (int rep = 0; rep < 25; ++rep) {
      const TransformKey key{"k", rng.next_u64(), TransformKind::GramSchmidt, dim};
      const auto q = expand_key(key);
      const auto& m = q.data();
      ++dense_keys;
      for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i; j < dim; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k < dim; ++k) s += m[k * dim + i] * m[k * dim + j];
          const double want = i == j ? 1.0 : 0.0;
          worst = std::max(worst, std::fabs(s - want));
        }
    }
  }

  bool perm_ok = true;
  for (std::size_t dim : dims) {
    for (int rep = 0; rep < 25; ++rep) {
      const TransformKey key{"k", rng.next_u64(), TransformKind::Permutation, dim};
      const auto q = expand_key(key);
      const auto& idx = q.index();
      ++perm_keys;
      std::vector<bool> seen(dim, false);
      if (idx.size() != dim) perm_ok = false;
      for (auto i : idx) {
        if (i >= dim || seen[i]) perm_ok = false;
        else seen[i] = true;
      }
      const auto x = random_vector(rng, dim);
      const auto y = q.apply(x);
      for (std::size_t i = 0; i < dim; ++i)
        if (y[i] != x[idx[i]]) perm_ok = false;
    }
  }

  Outcome o;
  o.pass = worst <= kOrthogonalityTol && perm_ok;
  o.detail = "max |Q^T Q - I| " + fmt("%.2e", worst) + " over " +
             std::to_string(dense_keys) + " dense keys (limit " +
             fmt("%.0e", kOrthogonalityTol) + "); " + std::to_string(perm_keys) +
             " permutations " + (perm_ok ? "all bijective" : "NOT bijective");
  return o;
}

// -- 3: kernel invariance -----------------------------------------------------
Outcome check_kernel_invariance() {
  const std::vector<KernelSpec> kernels = {
      KernelSpec::rbf(0.7), KernelSpec::linear(), KernelSpec::polynomial(3),
      KernelSpec::rational_quadratic(2.5), KernelSpec::wave(1.3)};
  const std::size_t dims[] = {2, 16, 64};
  Rng rng(303);
  double worst = 0.0;
  std::size_t trials = 0;
  for (const auto& spec : kernels) {
    for (int rep = 0; rep < 500; ++rep) {
      const std::size_t dim = dims[rep % 3];
      const TransformKind kind = rep % 2 == 0 ? TransformKind::GramSchmidt
                                              : TransformKind::Permutation;
      const TransformKey key{"k", rng.next_u64(), kind, dim};
      const auto q = expand_key(key);
      const auto x = random_vector(rng, dim);
      const auto y = random_vector(rng, dim);
      const double k0 = eval_kernel(spec, x, y);
      const double k1 = eval_kernel(spec, q.apply(x), q.apply(y));
      worst = std::max(worst,
                       std::fabs(k0 - k1) / std::max(1.0, std::fabs(k0)));
      ++trials;
    }
  }
  Outcome o;
  o.pass = worst <= kKernelInvTol;
  o.detail = "max |K(Qx,Qy) - K(x,y)| " + fmt("%.2e", worst) + " relative over " +
             std::to_string(trials) + " trials across 5 kernels, limit " +
             fmt("%.0e", kKernelInvTol);
  return o;
}

// -- 4: solver optimality -----------------------------------------------------
struct SolverFixture {
  std::string name;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  KernelSpec kernel;
  double c_param;
};

std::vector<SolverFixture> solver_fixtures() {
  std::vector<SolverFixture> fx = {
      {"two-point", {{1.0}, {-1.0}}, {1, -1}, KernelSpec::linear(), 1.0},
      {"xor",
       {{0.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}, {1.0, 0.0}},
       {1, 1, -1, -1},
       KernelSpec::polynomial(2),
       10.0},
      {"line3", {{-1.0}, {0.0}, {1.5}}, {-1, -1, 1}, KernelSpec::linear(), 1.0},
      {"rbf4",
       {{0.0, 0.0}, {0.2, 0.1}, {1.2, 1.0}, {1.0, 1.3}},
       {1, 1, -1, -1},
       KernelSpec::rbf(0.8),
       1.0},
      {"dup5",
       {{0.5, 0.0}, {0.5, 0.0}, {-0.4, 0.2}, {-0.5, -0.1}, {0.6, -0.2}},
       {1, 1, -1, -1, 1},
       KernelSpec::rational_quadratic(2.0),
       0.5},
      {"clusters6",
       {{1.0, 1.0}, {1.2, 0.9}, {0.8, 1.1}, {-1.0, -1.0}, {-0.9, -1.2}, {-1.1, -0.8}},
       {1, 1, 1, -1, -1, -1},
       KernelSpec::linear(),
       10.0},
  };

  Rng rng(0xACCE17ULL);
  const KernelSpec ks[] = {KernelSpec::linear(), KernelSpec::rbf(0.8),
                           KernelSpec::polynomial(2),
                           KernelSpec::rational_quadratic(2.0)};
  const double cs[] = {0.5, 1.0, 10.0};
  for (int k = 0; k < 16; ++k) {
    SolverFixture f;
    f.name = "random" + std::to_string(k);
    const std::size_t n = 4 + k % 3, d = 2 + k % 2;
    for (std::size_t i = 0; i < n; ++i) {
      f.x.push_back(random_vector(rng, d));
      f.y.push_back(i % 2 == 0 ? 1 : -1);
    }
    f.kernel = ks[k % 4];
    f.c_param = cs[k % 3];
    fx.push_back(std::move(f));
  }
  return fx;
}

Outcome check_solver() {
  const auto fixtures = solver_fixtures();
  double worst_gap = 0.0;
  std::string first_fail;
  std::size_t passed = 0;

  for (const auto& f : fixtures) {
    LabeledSet data;
    data.vectors = f.x;
    data.labels = f.y;
    for (std::size_t i = 0; i < f.x.size(); ++i)
      data.ids.emplace_back("p", "s" + std::to_string(i));
    SolverConfig cfg;
    cfg.c_param = f.c_param;
    const auto model = train_binary(data, f.kernel, cfg);

    const auto params = mirror(f.kernel);
    const oracle::QpProblem full{f.x, f.y, params, f.c_param};
    const auto best = oracle::qp_enumerate(full);
    const oracle::QpProblem sv_only{model.support_vectors, model.labels, params,
                                    f.c_param};
    const double got = oracle::qp_objective(sv_only, model.alphas);

    std::string why;
    const bool kkt =
        oracle::kkt_verify({f.x, f.y, params, f.c_param, model.support_vectors,
                            model.alphas, model.labels, model.bias},
                           kKktTol, &why);
    const double gap = best.objective - got;
    worst_gap = std::max(worst_gap, std::fabs(gap));

    const bool ok = model.converged && best.found && gap <= kObjectiveTol &&
                    got <= best.objective + kObjectiveSlack && kkt;
    if (ok) {
      ++passed;
    } else if (first_fail.empty()) {
      first_fail = f.name + ": converged=" + (model.converged ? "y" : "n") +
                   " gap=" + fmt("%.2e", gap) + (kkt ? "" : " kkt: " + why);
    }
  }

  Outcome o;
  o.pass = passed == fixtures.size();
  o.detail = std::to_string(passed) + "/" + std::to_string(fixtures.size()) +
             " fixtures at optimum (worst objective gap " + fmt("%.2e", worst_gap) +
             ", limit " + fmt("%.0e", kObjectiveTol) + ")";
  if (!first_fail.empty()) o.detail += "; first failure " + first_fail;
  return o;
}

// -- 5: protected-vs-plain equivalence ---------------------------------------
Outcome check_equivalence() {
  const auto& ts = bench_data();
  const auto kc = assign_keys(bench_clients(), KeyMode::Common, 5,
                              TransformKind::GramSchmidt, kBenchDim);

  struct Setup {
    const char* name;
    KernelSpec kernel;
    double c;
  };
  const Setup setups[] = {{"rbf", KernelSpec::rbf(kBenchGamma), kRbfC},
                          {"linear", KernelSpec::linear(), kLinearC}};

  double worst = 0.0;
  std::string eers;
  for (const auto& s : setups) {
    SolverConfig cfg;
    cfg.c_param = s.c;
    const auto plain = run_experiment(ts, std::nullopt, s.kernel, cfg,
                                      kBenchSplitSeed);
    const auto prot = run_experiment(ts, kc, s.kernel, cfg, kBenchSplitSeed);

    if (plain.scores.genuine.size() != prot.scores.genuine.size() ||
        plain.scores.impostor.size() != prot.scores.impostor.size())
      return {false, std::string(s.name) + ": score counts differ"};

    for (std::size_t i = 0; i < plain.scores.genuine.size(); ++i)
      worst = std::max(worst, std::fabs(plain.scores.genuine[i] -
                                        prot.scores.genuine[i]));
    for (std::size_t i = 0; i < plain.scores.impostor.size(); ++i)
      worst = std::max(worst, std::fabs(plain.scores.impostor[i] -
                                        prot.scores.impostor[i]));
    if (prot.eer != plain.eer)
      return {false, std::string(s.name) + ": EER differs, plain " +
                         format_double(plain.eer) + " vs protected " +
                         format_double(prot.eer)};
    eers += std::string(s.name) + " EER " + fmt("%.4f", plain.eer) + " ";
  }

  Outcome o;
  o.pass = worst <= kScoreMatchTol;
  o.detail = "sorted score multisets match within " + fmt("%.2e", worst) +
             " (limit " + fmt("%.0e", kScoreMatchTol) +
             "), EER bit-identical: " + eers;
  return o;
}

// -- 6: per-client key FAR ordering ------------------------------------------
Outcome check_key_ordering() {
  const auto& ts = corr_data();
  std::set<std::string> cs;
  for (const auto& t : ts) cs.insert(t.client_id);
  const std::vector<std::string> clients(cs.begin(), cs.end());
  const auto kernel = KernelSpec::rbf(kBenchGamma);
  SolverConfig cfg;
  cfg.c_param = kRbfC;

  int ok_seeds = 0;
  std::string detail;
  for (int seed = 1; seed <= kOrderingSeeds; ++seed) {
    const auto common = assign_keys(clients, KeyMode::Common, seed,
                                    TransformKind::GramSchmidt, kBenchDim);
    const auto per = assign_keys(clients, KeyMode::PerClient, seed,
                                 TransformKind::GramSchmidt, kBenchDim);
    const auto r1 = run_experiment(ts, common, kernel, cfg, kBenchSplitSeed);
    const auto r2 = run_experiment(ts, per, kernel, cfg, kBenchSplitSeed);
    const double far1 = far_at(r1.scores, r1.eer_threshold);
    const double far2 = far_at(r2.scores, r1.eer_threshold);
    if (far2 <= far1) ++ok_seeds;
    if (seed <= 3)
      detail += "seed" + std::to_string(seed) + " " + fmt("%.3f", far2) +
                "<=" + fmt("%.3f", far1) + " ";
  }

  Outcome o;
  o.pass = ok_seeds >= kOrderingNeeded;
  o.detail = std::to_string(ok_seeds) + "/" + std::to_string(kOrderingSeeds) +
             " seeds have per-client FAR <= shared-key FAR at the shared-key"
             " EER threshold (need " + std::to_string(kOrderingNeeded) + "); " +
             detail;
  return o;
}

// -- 7: leak attack behavior ---------------------------------------------------
Outcome check_leak_behavior() {
  const auto& ts = corr_data();
  std::set<std::string> cs;
  for (const auto& t : ts) cs.insert(t.client_id);
  const std::vector<std::string> clients(cs.begin(), cs.end());
  const auto kernel = KernelSpec::rbf(kBenchGamma);
  SolverConfig cfg;
  cfg.c_param = kRbfC;
  const std::string victim = clients.front();

  int dominated = 0, far_bounded = 0;
  double worst_leak_far = 0.0;
  for (int seed = 1; seed <= kOrderingSeeds; ++seed) {
    const auto kc = assign_keys(clients, KeyMode::PerClient, seed,
                                TransformKind::GramSchmidt, kBenchDim);
    const auto honest =
        run_victim_experiment(ts, kc, victim, kernel, cfg, kBenchSplitSeed);
    const auto key_leak =
        simulate_key_leak(ts, kc, victim, kernel, cfg, kBenchSplitSeed);
    const auto tpl_leak =
        simulate_template_leak(ts, kc, victim, kernel, cfg, kBenchSplitSeed);

    // FAR step functions change only at score values; checking every score
    // and every midpoint between neighbours covers all thresholds
    std::vector<double> taus = honest.scores.impostor;
    taus.insert(taus.end(), key_leak.scores.impostor.begin(),
                key_leak.scores.impostor.end());
    taus.insert(taus.end(), honest.scores.genuine.begin(),
                honest.scores.genuine.end());
    std::sort(taus.begin(), taus.end());
    taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
    bool dominates = true;
    for (std::size_t i = 0; i < taus.size() && dominates; ++i) {
      const double tau = taus[i];
      if (far_at(key_leak.scores, tau) < far_at(honest.scores, tau))
        dominates = false;
      if (i + 1 < taus.size()) {
        const double mid = 0.5 * (taus[i] + taus[i + 1]);
        if (far_at(key_leak.scores, mid) < far_at(honest.scores, mid))
          dominates = false;
      }
    }
    if (dominates) ++dominated;

    const double tau_star = honest.eer_threshold;
    const double fk = far_at(key_leak.scores, tau_star);
    const double ft = far_at(tpl_leak.scores, tau_star);
    worst_leak_far = std::max({worst_leak_far, fk, ft});
    if (fk < 0.5 && ft < 0.5) ++far_bounded;
  }

  Outcome o;
  o.pass = dominated >= kOrderingNeeded && far_bounded == kOrderingSeeds;
  o.detail = std::to_string(dominated) + "/" + std::to_string(kOrderingSeeds) +
             " seeds: key-leak FAR dominates honest FAR at every threshold"
             " (need " + std::to_string(kOrderingNeeded) + "); leak FAR at the"
             " honest EER threshold < 0.5 in " + std::to_string(far_bounded) +
             "/" + std::to_string(kOrderingSeeds) + " (worst " +
             fmt("%.3f", worst_leak_far) + ")";
  return o;
}

// -- 8: EER interpolation vs brute force --------------------------------------
Outcome check_eer_oracle() {
  Rng rng(20260818ULL);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    ScoreSet s;
    const std::size_t ng = 2 + rng.bounded(60), ni = 2 + rng.bounded(60);
    const bool quantize = rep % 3 == 0;
    for (std::size_t i = 0; i < ng; ++i) {
      double v = rng.next_normal() + 0.5;
      if (quantize) v = std::round(v * 4.0) / 4.0;
      s.genuine.push_back(v);
    }
    for (std::size_t i = 0; i < ni; ++i) {
      double v = rng.next_normal() - 0.5;
      if (quantize) v = std::round(v * 4.0) / 4.0;
      s.impostor.push_back(v);
    }
    const auto got = eer(far_frr_curve(s));
    const auto want = oracle::eer_bruteforce(s.genuine, s.impostor);
    worst = std::max({worst, std::fabs(got.eer - want.eer),
                      std::fabs(got.threshold - want.threshold)});
  }
  Outcome o;
  o.pass = worst <= kEerOracleTol;
  o.detail = "max |eer - oracle| " + fmt("%.2e", worst) +
             " over 100 random score sets, limit " + fmt("%.0e", kEerOracleTol);
  return o;
}

// -- 9: service end-to-end -----------------------------------------------------
Outcome check_service() {
  const auto plain = gen_synthetic(3, 8, 16, 1.5, 0.25, 77);
  const std::vector<std::string> clients = {"c000", "c001", "c002"};
  const auto kc = assign_keys(clients, KeyMode::PerClient, 9,
                              TransformKind::GramSchmidt, 16);
  const auto prot = protect_dataset(plain, kc);
  std::vector<ProtectedTemplate> enrolled, queries;
  for (std::size_t i = 0; i < prot.size(); ++i)
    ((i % 8) < 5 ? enrolled : queries).push_back(prot[i]);

  ServiceConfig cfg;
  cfg.kernel = KernelSpec::rbf(3.0);
  cfg.solver.c_param = 5.0;
  const auto local = train_one_vs_rest(enrolled, cfg.kernel, cfg.solver);

  cfg.port = 0;
  Server srv(cfg);
  srv.start();

  // phase 1: hostile input on a throwaway connection
  std::size_t fuzz_ok = 0;
  {
    Client fz("127.0.0.1", srv.port());
    Rng rng(777);
    const std::string alphabet = "{}[],:\"0123456789.eE+- truefalsenul";
    for (int i = 0; i < 10000; ++i) {
      std::string line;
      const std::size_t len = rng.bounded(100);
      for (std::size_t k = 0; k < len; ++k)
        line.push_back(alphabet[rng.bounded(alphabet.size())]);
      const auto resp = nlohmann::json::parse(fz.raw_request(line), nullptr, false);
      if (resp.is_object() && resp.contains("op")) ++fuzz_ok;
    }
  }
  if (fuzz_ok != 10000) {
    srv.stop();
    return {false, "only " + std::to_string(fuzz_ok) +
                       "/10000 hostile lines got a well-formed response"};
  }

  // phase 2: scripted session, decisions compared to the local pipeline
  Client cli("127.0.0.1", srv.port());
  for (const auto& client : clients) {
    nlohmann::json vectors = nlohmann::json::array(), ids = nlohmann::json::array();
    std::string key_id;
    for (const auto& t : enrolled)
      if (t.client_id == client) {
        vectors.push_back(t.values);
        ids.push_back(t.sample_id);
        key_id = t.key_id;
      }
    const auto r = cli.request({{"op", "enroll"},
                                {"client_id", client},
                                {"key_id", key_id},
                                {"vectors", vectors},
                                {"sample_ids", ids}});
    if (r.value("op", "") != "result") {
      srv.stop();
      return {false, "enroll failed: " + r.dump()};
    }
  }
  if (cli.request({{"op", "train"}}).value("op", "") != "result") {
    srv.stop();
    return {false, "train failed"};
  }

  std::size_t compared = 0, mismatches = 0;
  for (const auto& q : queries)
    for (const auto& claim : clients) {
      const auto resp = cli.request({{"op", "authenticate"},
                                     {"claim", claim},
                                     {"tau", 0.0},
                                     {"vector", q.values}});
      const AuthResult want = authenticate(
          local.at(claim),
          ProtectedTemplate{claim, "q", q.key_id, q.values}, 0.0);
      const bool wire_accept = resp.value("decision", "") == "accept";
      if (wire_accept != want.accept ||
          resp.value("score", 1e301) != want.score)
        ++mismatches;
      ++compared;
    }

  // phase 3: the wire must stay key- and template-blind
  const auto& wire = cli.transcript();
  bool leaked = wire.find("\"seed\"") != std::string::npos;
  for (const auto& t : plain)
    for (double v : t.values)
      if (wire.find(nlohmann::json(v).dump()) != std::string::npos) leaked = true;

  srv.stop();

  Outcome o;
  o.pass = mismatches == 0 && !leaked;
  o.detail = std::to_string(compared - mismatches) + "/" +
             std::to_string(compared) +
             " wire decisions and scores match the local pipeline; 10000"
             " hostile lines answered; transcript " +
             (leaked ? "LEAKS key/template material" : "carries no plain"
                                                       " template or key seed");
  return o;
}

// -- 10: serialization round-trips ---------------------------------------------
Outcome check_round_trip() {
  TempDir tmp;
  Rng rng(404);

  // plain and protected template stores
  std::vector<Template> ts;
  for (int c = 0; c < 4; ++c)
    for (int s = 0; s < 10; ++s)
      ts.push_back(Template{"c" + std::to_string(c), "s" + std::to_string(s),
                            random_vector(rng, 9)});
  save_templates(ts, tmp.path / "plain");
  const auto ts2 = load_templates(tmp.path / "plain");
  if (ts2.size() != ts.size()) return {false, "plain store count changed"};
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (ts2[i].values != ts[i].values || ts2[i].client_id != ts[i].client_id ||
        ts2[i].sample_id != ts[i].sample_id)
      return {false, "plain store row " + std::to_string(i) + " not value-exact"};

  const auto kc = assign_keys({"c0", "c1", "c2", "c3"}, KeyMode::PerClient, 3,
                              TransformKind::Permutation, 9);
  const auto prot = protect_dataset(ts, kc);
  save_protected(prot, tmp.path / "prot");
  const auto prot2 = load_protected(tmp.path / "prot");
  for (std::size_t i = 0; i < prot.size(); ++i)
    if (prot2[i].values != prot[i].values || prot2[i].key_id != prot[i].key_id)
      return {false, "protected store row " + std::to_string(i) + " changed"};

  // keyring
  save_keyring(kc, tmp.path / "kr.json");
  const auto kc2 = load_keyring(tmp.path / "kr.json");
  for (const auto& c : {"c0", "c1", "c2", "c3"}) {
    const auto &a = kc.key_for(c), &b = kc2.key_for(c);
    if (a.key_id != b.key_id || a.seed != b.seed || a.kind != b.kind ||
        a.dim != b.dim)
      return {false, std::string("keyring entry for ") + c + " changed"};
  }

  // model: byte-equal scores after reload
  LabeledSet data;
  for (int i = 0; i < 8; ++i) {
    data.vectors.push_back(random_vector(rng, 5));
    data.labels.push_back(i % 2 == 0 ? 1 : -1);
    data.ids.emplace_back("c", "s" + std::to_string(i));
  }
  SolverConfig scfg;
  scfg.c_param = 2.0;
  const auto model = train_binary(data, KernelSpec::rbf(1.1), scfg);
  save_model(model, tmp.path / "m.json");
  const auto model2 = load_model(tmp.path / "m.json");
  for (int i = 0; i < 20; ++i) {
    const auto q = random_vector(rng, 5);
    if (decision_score(model, q) != decision_score(model2, q))
      return {false, "reloaded model scores differ on probe " + std::to_string(i)};
  }

  // report with infinite sentinels
  SolverConfig ecfg;
  ecfg.c_param = 3.0;
  const auto rep = run_experiment(gen_synthetic(3, 6, 8, 1.3, 0.3, 5),
                                  assign_keys({"c000", "c001", "c002"},
                                              KeyMode::Common, 4,
                                              TransformKind::GramSchmidt, 8),
                                  KernelSpec::rbf(4.0), ecfg, 3);
  save_report(rep, tmp.path / "r.json", tmp.path / "r.csv");
  const auto rep2 = load_report(tmp.path / "r.json");
  if (rep2.eer != rep.eer || rep2.eer_threshold != rep.eer_threshold)
    return {false, "report EER fields changed"};
  if (rep2.scores.genuine != rep.scores.genuine ||
      rep2.scores.impostor != rep.scores.impostor)
    return {false, "report score lists changed"};
  if (rep2.curve.size() != rep.curve.size())
    return {false, "report curve length changed"};
  for (std::size_t i = 0; i < rep.curve.size(); ++i)
    if (rep2.curve[i].threshold != rep.curve[i].threshold ||
        rep2.curve[i].far != rep.curve[i].far ||
        rep2.curve[i].frr != rep.curve[i].frr)
      return {false, "report curve point " + std::to_string(i) + " changed"};
  if (!std::isinf(rep2.curve.front().threshold) ||
      !std::isinf(rep2.curve.back().threshold))
    return {false, "curve sentinels lost"};

  return {true,
          "templates, protected templates, keyrings, models and reports all"
          " reload value-exact (40 templates, 8-vector model, full report)"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Outcome (*fn)();
  };
  const Criterion criteria[] = {
      {"geometry preservation under keyed transforms", check_geometry},
      {"transform orthogonality", check_orthogonality},
      {"kernel invariance under shared transforms", check_kernel_invariance},
      {"solver optimality vs exhaustive oracle", check_solver},
      {"protected-vs-plain performance equivalence", check_equivalence},
      {"per-client keys lower FAR", check_key_ordering},
      {"leak attacks bounded and ordered", check_leak_behavior},
      {"EER matches brute-force enumeration", check_eer_oracle},
      {"service end-to-end fidelity and hygiene", check_service},
      {"serialization round-trips", check_round_trip},
  };

  int failures = 0;
  int idx = 0;
  for (const auto& c : criteria) {
    ++idx;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] %2d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", idx,
                c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
