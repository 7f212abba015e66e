#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ppsvm/errors.hpp"
#include "ppsvm/keyring.hpp"
#include "ppsvm/svm.hpp"

namespace ppsvm {

struct ScoreSet {
  std::vector<double> genuine;   // claimed identity == true identity
  std::vector<double> impostor;  // claimed identity != true identity
};

struct RatePoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

struct EerPoint {
  double eer = 0.0;
  double threshold = 0.0;
};

struct EvalReport {
  std::string scenario;
  std::string victim;  // set for victim-scoped scenarios
  KernelSpec kernel;
  double c_param = 1.0;
  std::string key_condition;  // "none", "common" or "per_client"
  std::vector<RatePoint> curve;
  double eer = 0.0;
  double eer_threshold = 0.0;
  ScoreSet scores;  // sorted ascending
};

ScoreSet score_protocol(const std::map<std::string, SvmModel>& models,
                        const std::vector<ProtectedTemplate>& queries,
                        const std::vector<std::string>& claims);

// Thresholds are the sorted unique scores plus -inf/+inf sentinels.
// FAR(t) counts impostor scores >= t, FRR(t) genuine scores < t, matching
// the inclusive accept rule.
std::vector<RatePoint> far_frr_curve(const ScoreSet& s);

// Exact FAR==FRR curve point when one exists; otherwise linear
// interpolation inside the bracketing segment.
EerPoint eer(const std::vector<RatePoint>& curve);

// Fraction of impostor scores at or above tau.
double far_at(const ScoreSet& s, double tau);

// Cluster-per-client toy data: client means on a sphere of radius
// `separation`, samples mean + noise*N(0,I), each sample unit-normalized.
std::vector<Template> gen_synthetic(std::size_t clients,
                                    std::size_t samples_per_client,
                                    std::size_t dim, double separation,
                                    double noise, std::uint64_t seed);

// Deterministic per-client half split keyed by sorted sample ids; immune to
// input ordering. Returns (training half, query half); an odd count leaves
// the extra sample in training.
std::pair<std::vector<Template>, std::vector<Template>> split_half(
    const std::vector<Template>& ts, std::uint64_t split_seed);

// Full verification protocol: split, protect, train one-vs-rest, score every
// query against every enrollee. kc == nullopt runs on plain templates.
EvalReport run_experiment(const std::vector<Template>& templates,
                          const std::optional<KeyCondition>& kc,
                          const KernelSpec& kernel, const SolverConfig& cfg,
                          std::uint64_t split_seed);

// Honest protocol restricted to one enrollee's model; the baseline the leak
// scenarios are compared against.
EvalReport run_victim_experiment(const std::vector<Template>& templates,
                                 const KeyCondition& kc, const std::string& victim,
                                 const KernelSpec& kernel, const SolverConfig& cfg,
                                 std::uint64_t split_seed);

// Impostors present their own templates protected with the victim's leaked
// key. Requires per-client keys.
EvalReport simulate_key_leak(const std::vector<Template>& templates,
                             const KeyCondition& kc, const std::string& victim,
                             const KernelSpec& kernel, const SolverConfig& cfg,
                             std::uint64_t split_seed);

// Impostors present the victim's leaked plain templates protected with their
// own keys. Requires per-client keys.
EvalReport simulate_template_leak(const std::vector<Template>& templates,
                                  const KeyCondition& kc, const std::string& victim,
                                  const KernelSpec& kernel, const SolverConfig& cfg,
                                  std::uint64_t split_seed);

void to_json(nlohmann::json& j, const RatePoint& p);
void from_json(const nlohmann::json& j, RatePoint& p);
void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

}  // namespace ppsvm
