#include "ppsvm/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "ppsvm/rng.hpp"
#include "ppsvm/vecmath.hpp"

namespace ppsvm {

ScoreSet score_protocol(const std::map<std::string, SvmModel>& models,
                        const std::vector<ProtectedTemplate>& queries,
                        const std::vector<std::string>& claims) {
  if (queries.size() != claims.size())
    throw DimensionMismatch("claims list not parallel to queries");
  ScoreSet s;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    auto it = models.find(claims[i]);
    if (it == models.end())
      throw UnknownClaim("no model for claimed identity " + claims[i]);
    const double score = decision_score(it->second, queries[i].values);
    (claims[i] == queries[i].client_id ? s.genuine : s.impostor).push_back(score);
  }
  return s;
}

std::vector<RatePoint> far_frr_curve(const ScoreSet& s) {
  if (s.genuine.empty() || s.impostor.empty())
    throw EmptyScores("curve needs at least one genuine and one impostor score");
  if (!all_finite(s.genuine) || !all_finite(s.impostor))
    throw NonFiniteInput("scores must be finite");

  std::vector<double> gen = s.genuine, imp = s.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());

  std::vector<double> taus;
  taus.reserve(gen.size() + imp.size());
  taus.insert(taus.end(), gen.begin(), gen.end());
  taus.insert(taus.end(), imp.begin(), imp.end());
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  const double ng = static_cast<double>(gen.size());
  const double ni = static_cast<double>(imp.size());
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<RatePoint> curve;
  curve.reserve(taus.size() + 2);
  curve.push_back({-inf, 1.0, 0.0});
  for (double t : taus) {
    const auto imp_below = std::lower_bound(imp.begin(), imp.end(), t) - imp.begin();
    const auto gen_below = std::lower_bound(gen.begin(), gen.end(), t) - gen.begin();
    curve.push_back({t, static_cast<double>(imp.size() - imp_below) / ni,
                     static_cast<double>(gen_below) / ng});
  }
  curve.push_back({inf, 0.0, 1.0});
  return curve;
}

EerPoint eer(const std::vector<RatePoint>& curve) {
  if (curve.empty()) throw EmptyScores("empty rate curve");
  for (const auto& p : curve)
    if (p.far == p.frr) return {p.far, p.threshold};

  for (std::size_t k = 0; k + 1 < curve.size(); ++k) {
    const double d1 = curve[k].far - curve[k].frr;
    const double d2 = curve[k + 1].far - curve[k + 1].frr;
    if (d1 > 0.0 && d2 < 0.0) {
      // Interpolate in the segment parameter so the rate value depends only
      // on the count fractions, not on the score magnitudes.
      const double t = d1 / (d1 - d2);
      const double value = curve[k].far + t * (curve[k + 1].far - curve[k].far);
      const double t1 = curve[k].threshold, t2 = curve[k + 1].threshold;
      double tau;
      if (std::isinf(t1) && std::isinf(t2)) tau = 0.0;
      else if (std::isinf(t1)) tau = t2;
      else if (std::isinf(t2)) tau = t1;
      else tau = t1 + t * (t2 - t1);
      return {value, tau};
    }
  }
  throw Error("rate curve has no FAR/FRR crossing");
}

double far_at(const ScoreSet& s, double tau) {
  if (s.impostor.empty()) throw EmptyScores("no impostor scores");
  std::size_t cnt = 0;
  for (double v : s.impostor)
    if (v >= tau) ++cnt;
  return static_cast<double>(cnt) / static_cast<double>(s.impostor.size());
}

std::vector<Template> gen_synthetic(std::size_t clients,
                                    std::size_t samples_per_client,
                                    std::size_t dim, double separation,
                                    double noise, std::uint64_t seed) {
  if (clients < 2 || samples_per_client < 2)
    throw Error("synthetic data needs >= 2 clients and >= 2 samples each");
  if (dim < 1) throw DimensionMismatch("dimension must be >= 1");

  Rng rng(seed);
  std::vector<Template> out;
  out.reserve(clients * samples_per_client);
  char buf[32];
  for (std::size_t c = 0; c < clients; ++c) {
    std::vector<double> mean(dim);
    for (auto& v : mean) v = rng.next_normal();
    const double mn = l2_norm(mean);
    if (mn > 0.0)
      for (auto& v : mean) v *= separation / mn;

    std::snprintf(buf, sizeof buf, "c%03zu", c);
    const std::string client_id = buf;
    for (std::size_t s = 0; s < samples_per_client; ++s) {
      Template t;
      t.client_id = client_id;
      std::snprintf(buf, sizeof buf, "s%03zu", s);
      t.sample_id = buf;
      t.values.resize(dim);
      for (std::size_t i = 0; i < dim; ++i)
        t.values[i] = mean[i] + noise * rng.next_normal();
      const double n = l2_norm(t.values);
      if (n > 0.0)
        for (auto& v : t.values) v /= n;
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::pair<std::vector<Template>, std::vector<Template>> split_half(
    const std::vector<Template>& ts, std::uint64_t split_seed) {
  std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> groups;
  for (std::size_t i = 0; i < ts.size(); ++i)
    groups[ts[i].client_id].emplace_back(ts[i].sample_id, i);

  std::vector<Template> train, query;
  for (auto& [client, items] : groups) {
    std::sort(items.begin(), items.end());
    Rng rng(splitmix64(split_seed ^ fnv1a64(client)));
    for (std::size_t i = items.size(); i > 1; --i)
      std::swap(items[i - 1], items[rng.bounded(i)]);
    const std::size_t take = (items.size() + 1) / 2;
    for (std::size_t k = 0; k < items.size(); ++k)
      (k < take ? train : query).push_back(ts[items[k].second]);
  }
  auto canon = [](const Template& a, const Template& b) {
    if (a.client_id != b.client_id) return a.client_id < b.client_id;
    return a.sample_id < b.sample_id;
  };
  std::sort(train.begin(), train.end(), canon);
  std::sort(query.begin(), query.end(), canon);
  return {std::move(train), std::move(query)};
}

namespace {

std::vector<ProtectedTemplate> protect_or_plain(
    const std::vector<Template>& ts, const std::optional<KeyCondition>& kc) {
  if (kc) return protect_dataset(ts, *kc);
  std::vector<ProtectedTemplate> out;
  out.reserve(ts.size());
  for (const auto& t : ts) {
    ProtectedTemplate p;
    p.client_id = t.client_id;
    p.sample_id = t.sample_id;
    p.key_id = "plain";
    p.values = t.values;
    out.push_back(std::move(p));
  }
  return out;
}

std::string condition_label(const std::optional<KeyCondition>& kc) {
  if (!kc) return "none";
  return kc->mode() == KeyMode::Common ? "common" : "per_client";
}

EvalReport finish_report(std::string scenario, std::string victim,
                         const KernelSpec& kernel, const SolverConfig& cfg,
                         std::string condition, ScoreSet scores) {
  std::sort(scores.genuine.begin(), scores.genuine.end());
  std::sort(scores.impostor.begin(), scores.impostor.end());
  EvalReport r;
  r.scenario = std::move(scenario);
  r.victim = std::move(victim);
  r.kernel = kernel;
  r.c_param = cfg.c_param;
  r.key_condition = std::move(condition);
  r.curve = far_frr_curve(scores);
  const EerPoint e = eer(r.curve);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  r.scores = std::move(scores);
  return r;
}

void require_victim(const std::vector<Template>& templates,
                    const std::string& victim) {
  for (const auto& t : templates)
    if (t.client_id == victim) return;
  throw UnknownClient("victim " + victim + " not in dataset");
}

}  // namespace

EvalReport run_experiment(const std::vector<Template>& templates,
                          const std::optional<KeyCondition>& kc,
                          const KernelSpec& kernel, const SolverConfig& cfg,
                          std::uint64_t split_seed) {
  auto [train_t, query_t] = split_half(templates, split_seed);
  const auto train_p = protect_or_plain(train_t, kc);
  const auto query_p = protect_or_plain(query_t, kc);

  const auto models = train_one_vs_rest(train_p, kernel, cfg);

  std::vector<ProtectedTemplate> queries;
  std::vector<std::string> claims;
  queries.reserve(query_p.size() * models.size());
  claims.reserve(query_p.size() * models.size());
  for (const auto& q : query_p) {
    for (const auto& [client, model] : models) {
      queries.push_back(q);
      claims.push_back(client);
    }
  }
  ScoreSet scores = score_protocol(models, queries, claims);
  return finish_report("honest", "", kernel, cfg, condition_label(kc),
                       std::move(scores));
}

namespace {

struct VictimSetup {
  SvmModel model;
  std::vector<Template> victim_query_plain;
  std::vector<Template> other_query_plain;
};

VictimSetup prepare_victim(const std::vector<Template>& templates,
                           const KeyCondition& kc, const std::string& victim,
                           const KernelSpec& kernel, const SolverConfig& cfg,
                           std::uint64_t split_seed) {
  require_victim(templates, victim);
  auto [train_t, query_t] = split_half(templates, split_seed);
  const auto train_p = protect_dataset(train_t, kc);

  VictimSetup vs;
  vs.model = train_client_model(train_p, victim, kernel, cfg);
  for (auto& q : query_t)
    (q.client_id == victim ? vs.victim_query_plain : vs.other_query_plain)
        .push_back(std::move(q));
  return vs;
}

void score_queries(const VictimSetup& vs, const std::string& victim,
                   const std::vector<ProtectedTemplate>& queries, ScoreSet& out) {
  std::map<std::string, SvmModel> models;
  models.emplace(victim, vs.model);
  const std::vector<std::string> claims(queries.size(), victim);
  ScoreSet s = score_protocol(models, queries, claims);
  out.genuine.insert(out.genuine.end(), s.genuine.begin(), s.genuine.end());
  out.impostor.insert(out.impostor.end(), s.impostor.begin(), s.impostor.end());
}

ScoreSet victim_genuine_scores(const VictimSetup& vs, const KeyCondition& kc,
                               const std::string& victim) {
  ScoreSet s;
  std::vector<ProtectedTemplate> own;
  const TransformKey& vkey = kc.key_for(victim);
  for (const auto& t : vs.victim_query_plain) own.push_back(protect(t, vkey));
  score_queries(vs, victim, own, s);
  return s;
}

}  // namespace

EvalReport run_victim_experiment(const std::vector<Template>& templates,
                                 const KeyCondition& kc, const std::string& victim,
                                 const KernelSpec& kernel, const SolverConfig& cfg,
                                 std::uint64_t split_seed) {
  const auto vs = prepare_victim(templates, kc, victim, kernel, cfg, split_seed);
  ScoreSet scores = victim_genuine_scores(vs, kc, victim);

  std::vector<ProtectedTemplate> honest;
  for (const auto& t : vs.other_query_plain)
    honest.push_back(protect(t, kc.key_for(t.client_id)));
  score_queries(vs, victim, honest, scores);

  return finish_report("honest-victim", victim, kernel, cfg,
                       kc.mode() == KeyMode::Common ? "common" : "per_client",
                       std::move(scores));
}

EvalReport simulate_key_leak(const std::vector<Template>& templates,
                             const KeyCondition& kc, const std::string& victim,
                             const KernelSpec& kernel, const SolverConfig& cfg,
                             std::uint64_t split_seed) {
  if (kc.mode() != KeyMode::PerClient)
    throw Error("key-leak simulation requires per-client keys");
  const auto vs = prepare_victim(templates, kc, victim, kernel, cfg, split_seed);
  ScoreSet scores = victim_genuine_scores(vs, kc, victim);

  // Attackers run their own biometrics through the stolen victim key.
  const TransformKey& vkey = kc.key_for(victim);
  std::vector<ProtectedTemplate> forged;
  for (const auto& t : vs.other_query_plain) forged.push_back(protect(t, vkey));
  score_queries(vs, victim, forged, scores);

  return finish_report("key-leak", victim, kernel, cfg, "per_client",
                       std::move(scores));
}

EvalReport simulate_template_leak(const std::vector<Template>& templates,
                                  const KeyCondition& kc, const std::string& victim,
                                  const KernelSpec& kernel, const SolverConfig& cfg,
                                  std::uint64_t split_seed) {
  if (kc.mode() != KeyMode::PerClient)
    throw Error("template-leak simulation requires per-client keys");
  const auto vs = prepare_victim(templates, kc, victim, kernel, cfg, split_seed);
  ScoreSet scores = victim_genuine_scores(vs, kc, victim);

  // Attackers replay the victim's stolen plain templates through their own
  // keys. The presenter is the attacker, so the query carries the attacker's
  // identity.
  std::set<std::string> attackers;
  for (const auto& t : vs.other_query_plain) attackers.insert(t.client_id);
  std::vector<ProtectedTemplate> forged;
  for (const auto& a : attackers) {
    const TransformKey& akey = kc.key_for(a);
    for (const auto& t : vs.victim_query_plain) {
      ProtectedTemplate p = protect(t, akey);
      p.client_id = a;
      forged.push_back(std::move(p));
    }
  }
  score_queries(vs, victim, forged, scores);

  return finish_report("template-leak", victim, kernel, cfg, "per_client",
                       std::move(scores));
}

namespace {

nlohmann::json tau_to_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

double tau_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    throw ParseError("bad threshold value: " + s);
  }
  return j.get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const RatePoint& p) {
  j = nlohmann::json{{"tau", tau_to_json(p.threshold)}, {"far", p.far},
                     {"frr", p.frr}};
}

void from_json(const nlohmann::json& j, RatePoint& p) {
  p.threshold = tau_from_json(j.at("tau"));
  p.far = j.at("far").get<double>();
  p.frr = j.at("frr").get<double>();
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"schema_version", 1},
                     {"scenario", r.scenario},
                     {"victim", r.victim},
                     {"kernel", r.kernel},
                     {"c_param", r.c_param},
                     {"key_condition", r.key_condition},
                     {"curve", r.curve},
                     {"eer", r.eer},
                     {"eer_threshold", tau_to_json(r.eer_threshold)},
                     {"scores", nlohmann::json{{"genuine", r.scores.genuine},
                                               {"impostor", r.scores.impostor}}}};
}

void from_json(const nlohmann::json& j, EvalReport& r) {
  if (j.value("schema_version", 0) != 1)
    throw SchemaVersionMismatch("unsupported report schema_version");
  r.scenario = j.at("scenario").get<std::string>();
  r.victim = j.value("victim", std::string());
  r.kernel = j.at("kernel").get<KernelSpec>();
  r.c_param = j.at("c_param").get<double>();
  r.key_condition = j.at("key_condition").get<std::string>();
  r.curve = j.at("curve").get<std::vector<RatePoint>>();
  r.eer = j.at("eer").get<double>();
  r.eer_threshold = tau_from_json(j.at("eer_threshold"));
  r.scores.genuine = j.at("scores").at("genuine").get<std::vector<double>>();
  r.scores.impostor = j.at("scores").at("impostor").get<std::vector<double>>();
}

}  // namespace ppsvm
