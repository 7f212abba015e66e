#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ppsvm/errors.hpp"
#include "ppsvm/kernels.hpp"
#include "ppsvm/transform.hpp"

namespace ppsvm {

struct LabeledSet {
  std::vector<std::vector<double>> vectors;
  std::vector<int> labels;  // +1 / -1
  std::vector<std::pair<std::string, std::string>> ids;  // (client_id, sample_id)
};

struct SvmModel {
  KernelSpec kernel;
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> alphas;  // 0 < alpha <= C, parallel to support_vectors
  std::vector<int> labels;
  double bias = 0.0;
  double c_param = 1.0;
  std::string trained_on_key;  // empty when trained on plain templates
  // In-memory training outcome; not serialized. False when the solver hit
  // its iteration cap with KKT violations outstanding.
  bool converged = true;
};

struct SolverConfig {
  double c_param = 1.0;
  double kkt_tol = 1e-3;
  int max_passes = 10;  // consecutive sweeps without progress before giving up
  long max_iters = 200000;
  std::uint64_t seed = 0;
};

// Dual objective sum(alpha) - 1/2 sum_ab alpha_a alpha_b y_a y_b K(a,b).
double dual_objective(std::span<const double> alphas, std::span<const int> labels,
                      const GramMatrix& g);

SvmModel train_binary(const LabeledSet& data, const KernelSpec& kernel,
                      const SolverConfig& cfg);

double decision_score(const SvmModel& model, std::span<const double> x);

int classify(const SvmModel& model, std::span<const double> x);

// One binary model for a single enrollee: their templates +1, all others -1.
SvmModel train_client_model(const std::vector<ProtectedTemplate>& templates,
                            const std::string& client_id,
                            const KernelSpec& kernel, const SolverConfig& cfg);

std::map<std::string, SvmModel> train_one_vs_rest(
    const std::vector<ProtectedTemplate>& templates, const KernelSpec& kernel,
    const SolverConfig& cfg);

struct AuthResult {
  bool accept = false;
  double score = 0.0;
};

// Accept iff the decision score reaches the threshold (inclusive).
AuthResult authenticate(const SvmModel& model, const ProtectedTemplate& query,
                        double tau);

}  // namespace ppsvm
