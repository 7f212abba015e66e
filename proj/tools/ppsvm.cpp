#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <set>
#include <thread>

#include <CLI11.hpp>

#include "ppsvm/evalx.hpp"
#include "ppsvm/features.hpp"
#include "ppsvm/keyring.hpp"
#include "ppsvm/service.hpp"
#include "ppsvm/store.hpp"

namespace {

using namespace ppsvm;

struct KernelFlags {
  std::string kind = "linear";
  double gamma = 81.0;
  int degree = 2;
  double rq_c = 1.0;
  double theta = 1.0;
  double c_param = -1.0;  // resolved per kernel when unset
};

void add_kernel_flags(CLI::App* cmd, KernelFlags& kf) {
  cmd->add_option("--kernel", kf.kind,
                  "linear|rbf|polynomial|rational_quadratic|wave")
      ->capture_default_str();
  cmd->add_option("--gamma", kf.gamma, "rbf width")->capture_default_str();
  cmd->add_option("--degree", kf.degree, "polynomial degree")
      ->capture_default_str();
  cmd->add_option("--rq-c", kf.rq_c, "rational quadratic offset")
      ->capture_default_str();
  cmd->add_option("--theta", kf.theta, "wave period")->capture_default_str();
  cmd->add_option("--C", kf.c_param,
                  "box constraint; defaults to 1 (linear) or 34 (rbf)");
}

KernelSpec kernel_from(const KernelFlags& kf) {
  const KernelKind kind = kernel_kind_from_string(kf.kind);
  switch (kind) {
    case KernelKind::Rbf: return KernelSpec::rbf(kf.gamma);
    case KernelKind::Linear: return KernelSpec::linear();
    case KernelKind::Polynomial: return KernelSpec::polynomial(kf.degree);
    case KernelKind::RationalQuadratic: return KernelSpec::rational_quadratic(kf.rq_c);
    case KernelKind::Wave: return KernelSpec::wave(kf.theta);
  }
  return KernelSpec::linear();
}

double resolve_c(const KernelFlags& kf) {
  if (kf.c_param > 0.0) return kf.c_param;
  return kf.kind == "rbf" ? 34.0 : 1.0;
}

struct SolverFlags {
  double kkt_tol = 1e-3;
  int max_passes = 10;
  long max_iters = 200000;
  std::uint64_t seed = 0;
};

void add_solver_flags(CLI::App* cmd, SolverFlags& sf) {
  cmd->add_option("--kkt-tol", sf.kkt_tol, "KKT tolerance")->capture_default_str();
  cmd->add_option("--max-passes", sf.max_passes, "quiet sweeps before giving up")
      ->capture_default_str();
  cmd->add_option("--max-iters", sf.max_iters, "solver iteration cap")
      ->capture_default_str();
  cmd->add_option("--solver-seed", sf.seed, "seed for solver tie-breaking")
      ->capture_default_str();
}

SolverConfig solver_from(const SolverFlags& sf, double c_param) {
  SolverConfig cfg;
  cfg.c_param = c_param;
  cfg.kkt_tol = sf.kkt_tol;
  cfg.max_passes = sf.max_passes;
  cfg.max_iters = sf.max_iters;
  cfg.seed = sf.seed;
  return cfg;
}

std::vector<std::string> clients_of(const std::vector<Template>& ts) {
  std::set<std::string> s;
  for (const auto& t : ts) s.insert(t.client_id);
  return {s.begin(), s.end()};
}

KeyMode mode_from(const std::string& s) {
  if (s == "common") return KeyMode::Common;
  if (s == "per_client") return KeyMode::PerClient;
  throw ParseError("unknown key mode: " + s);
}

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

void print_report_summary(const EvalReport& r) {
  std::cout << "scenario=" << r.scenario
            << " key_condition=" << r.key_condition
            << " kernel=" << to_string(r.kernel.kind)
            << " C=" << format_double(r.c_param)
            << " genuine=" << r.scores.genuine.size()
            << " impostor=" << r.scores.impostor.size()
            << " eer=" << format_double(r.eer)
            << " eer_threshold=" << format_double(r.eer_threshold) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privacy-preserving SVM toolkit: orthogonal template protection, "
               "SVM verification, evaluation and attack simulation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic template set");
  struct {
    std::size_t clients = 10, per_client = 20, dim = 64;
    double separation = 1.0, noise = 0.35;
    std::uint64_t seed = 1;
    std::string out;
  } sy;
  synth->add_option("--clients", sy.clients)->capture_default_str();
  synth->add_option("--per-client", sy.per_client)->capture_default_str();
  synth->add_option("--dim", sy.dim)->capture_default_str();
  synth->add_option("--separation", sy.separation)->capture_default_str();
  synth->add_option("--noise", sy.noise)->capture_default_str();
  synth->add_option("--seed", sy.seed)->capture_default_str();
  synth->add_option("--out", sy.out, "output template store directory")->required();
  synth->callback([&] {
    const auto ts = gen_synthetic(sy.clients, sy.per_client, sy.dim, sy.separation,
                                  sy.noise, sy.seed);
    save_templates(ts, sy.out);
    std::cout << "wrote " << ts.size() << " templates dim " << sy.dim << " to "
              << sy.out << "\n";
  });

  // extract
  auto* extract = app.add_subcommand(
      "extract", "extract block-mean templates from a directory-per-client PGM tree");
  struct {
    std::string images, out;
    std::size_t block_h = 6, block_w = 6;
    bool no_normalize = false;
  } ex;
  extract->add_option("--images", ex.images, "root directory of client subdirs")
      ->required();
  extract->add_option("--block-h", ex.block_h)->capture_default_str();
  extract->add_option("--block-w", ex.block_w)->capture_default_str();
  extract->add_flag("--no-normalize", ex.no_normalize,
                    "skip unit L2 normalization");
  extract->add_option("--out", ex.out, "output template store directory")->required();
  extract->callback([&] {
    const auto ts = extract_dataset(ex.images, {ex.block_h, ex.block_w},
                                    !ex.no_normalize);
    save_templates(ts, ex.out);
    std::cout << "wrote " << ts.size() << " templates to " << ex.out << "\n";
  });

  // keygen
  auto* keygen = app.add_subcommand("keygen", "derive a keyring from a master seed");
  struct {
    std::string templates, clients_csv, mode = "common", kind = "permutation", out;
    std::uint64_t master_seed = 7;
    std::size_t dim = 0;
  } kg;
  keygen->add_option("--templates", kg.templates,
                     "plain template store; supplies clients and dim");
  keygen->add_option("--clients", kg.clients_csv, "comma-separated client ids");
  keygen->add_option("--mode", kg.mode, "common|per_client")->capture_default_str();
  keygen->add_option("--kind", kg.kind, "permutation|gram_schmidt|identity")
      ->capture_default_str();
  keygen->add_option("--master-seed", kg.master_seed)->capture_default_str();
  keygen->add_option("--dim", kg.dim, "required unless --templates given");
  keygen->add_option("--out", kg.out, "keyring JSON path")->required();
  keygen->callback([&] {
    std::vector<std::string> clients;
    std::size_t dim = kg.dim;
    if (!kg.templates.empty()) {
      const auto ts = load_templates(kg.templates);
      clients = clients_of(ts);
      if (dim == 0 && !ts.empty()) dim = ts.front().values.size();
    }
    if (!kg.clients_csv.empty()) {
      clients.clear();
      std::string cur;
      for (char c : kg.clients_csv + ",") {
        if (c == ',') {
          if (!cur.empty()) clients.push_back(cur);
          cur.clear();
        } else {
          cur.push_back(c);
        }
      }
    }
    if (clients.empty()) throw Error("no clients: give --templates or --clients");
    if (dim == 0) throw Error("no dimension: give --templates or --dim");
    const auto kc = assign_keys(clients, mode_from(kg.mode), kg.master_seed,
                                transform_kind_from_string(kg.kind), dim);
    save_keyring(kc, kg.out);
    std::cout << "wrote " << kg.mode << " keyring for " << clients.size()
              << " clients to " << kg.out << "\n";
  });

  // protect
  auto* protect_cmd = app.add_subcommand("protect",
                                         "protect a plain template store");
  struct {
    std::string templates, keyring, out;
  } pr;
  protect_cmd->add_option("--templates", pr.templates, "plain store")->required();
  protect_cmd->add_option("--keyring", pr.keyring, "keyring JSON")->required();
  protect_cmd->add_option("--out", pr.out, "protected store directory")->required();
  protect_cmd->callback([&] {
    const auto ts = load_templates(pr.templates);
    const auto kc = load_keyring(pr.keyring);
    const auto ps = protect_dataset(ts, kc);
    save_protected(ps, pr.out);
    std::cout << "wrote " << ps.size() << " protected templates to " << pr.out
              << "\n";
  });

  // train
  auto* train = app.add_subcommand("train",
                                   "train one-vs-rest models on a protected store");
  struct {
    std::string templates, out;
    KernelFlags kf;
    SolverFlags sf;
  } tr;
  train->add_option("--templates", tr.templates, "protected store")->required();
  train->add_option("--out", tr.out, "output directory for model JSON files")
      ->required();
  add_kernel_flags(train, tr.kf);
  add_solver_flags(train, tr.sf);
  train->callback([&] {
    const auto ts = load_protected(tr.templates);
    const auto kernel = kernel_from(tr.kf);
    const auto cfg = solver_from(tr.sf, resolve_c(tr.kf));
    const auto models = train_one_vs_rest(ts, kernel, cfg);
    std::filesystem::create_directories(tr.out);
    for (const auto& [client, model] : models) {
      save_model(model, std::filesystem::path(tr.out) / (client + ".json"));
      std::cout << "client=" << client
                << " support_vectors=" << model.support_vectors.size()
                << " converged=" << (model.converged ? "yes" : "no") << "\n";
    }
  });

  // authenticate
  auto* auth = app.add_subcommand("authenticate",
                                  "score one protected query against a model");
  struct {
    std::string model, queries, client, sample;
    double tau = 0.0;
  } au;
  auth->add_option("--model", au.model, "model JSON")->required();
  auth->add_option("--queries", au.queries, "protected store")->required();
  auth->add_option("--client", au.client, "query owner client_id")->required();
  auth->add_option("--sample", au.sample, "query sample_id")->required();
  auth->add_option("--tau", au.tau, "accept threshold")->capture_default_str();
  auth->callback([&] {
    const auto model = load_model(au.model);
    const auto qs = load_protected(au.queries);
    for (const auto& q : qs) {
      if (q.client_id == au.client && q.sample_id == au.sample) {
        const auto r = authenticate(model, q, au.tau);
        nlohmann::json out{{"decision", r.accept ? "accept" : "reject"},
                           {"score", r.score},
                           {"tau", au.tau}};
        std::cout << out.dump() << "\n";
        return;
      }
    }
    throw UnknownClient("no query " + au.client + "/" + au.sample + " in store");
  });

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "run the verification protocol and write report + curve");
  struct {
    std::string templates, keyring, key_mode = "none", kind = "permutation";
    std::uint64_t master_seed = 7, split_seed = 11;
    std::string report = "report.json", curve = "curve.csv";
    KernelFlags kf;
    SolverFlags sf;
  } ev;
  evaluate->add_option("--templates", ev.templates, "plain store")->required();
  evaluate->add_option("--keyring", ev.keyring, "keyring JSON (overrides --key-mode)");
  evaluate->add_option("--key-mode", ev.key_mode, "none|common|per_client")
      ->capture_default_str();
  evaluate->add_option("--kind", ev.kind, "transform kind for --key-mode")
      ->capture_default_str();
  evaluate->add_option("--master-seed", ev.master_seed)->capture_default_str();
  evaluate->add_option("--split-seed", ev.split_seed)->capture_default_str();
  evaluate->add_option("--report", ev.report)->capture_default_str();
  evaluate->add_option("--curve", ev.curve)->capture_default_str();
  add_kernel_flags(evaluate, ev.kf);
  add_solver_flags(evaluate, ev.sf);
  evaluate->callback([&] {
    const auto ts = load_templates(ev.templates);
    std::optional<KeyCondition> kc;
    if (!ev.keyring.empty()) {
      kc = load_keyring(ev.keyring);
    } else if (ev.key_mode != "none") {
      kc = assign_keys(clients_of(ts), mode_from(ev.key_mode), ev.master_seed,
                       transform_kind_from_string(ev.kind),
                       ts.empty() ? 0 : ts.front().values.size());
    }
    const auto kernel = kernel_from(ev.kf);
    const auto cfg = solver_from(ev.sf, resolve_c(ev.kf));
    const auto report = run_experiment(ts, kc, kernel, cfg, ev.split_seed);
    save_report(report, ev.report, ev.curve);
    print_report_summary(report);
  });

  // attack
  auto* attack = app.add_subcommand("attack", "simulate a leak-based spoofing attack");
  struct {
    std::string scenario, templates, keyring, victim, kind = "permutation";
    std::uint64_t master_seed = 7, split_seed = 11;
    std::string report = "attack.json", curve = "attack.csv";
    KernelFlags kf;
    SolverFlags sf;
  } at;
  attack->add_option("--scenario", at.scenario, "key-leak|template-leak")->required();
  attack->add_option("--templates", at.templates, "plain store")->required();
  attack->add_option("--keyring", at.keyring,
                     "per-client keyring JSON (default: derived)");
  attack->add_option("--kind", at.kind, "transform kind when deriving keys")
      ->capture_default_str();
  attack->add_option("--master-seed", at.master_seed)->capture_default_str();
  attack->add_option("--split-seed", at.split_seed)->capture_default_str();
  attack->add_option("--victim", at.victim, "victim client_id (default: first)");
  attack->add_option("--report", at.report)->capture_default_str();
  attack->add_option("--curve", at.curve)->capture_default_str();
  add_kernel_flags(attack, at.kf);
  add_solver_flags(attack, at.sf);
  attack->callback([&] {
    const auto ts = load_templates(at.templates);
    KeyCondition kc = at.keyring.empty()
                          ? assign_keys(clients_of(ts), KeyMode::PerClient,
                                        at.master_seed,
                                        transform_kind_from_string(at.kind),
                                        ts.empty() ? 0 : ts.front().values.size())
                          : load_keyring(at.keyring);
    std::string victim = at.victim;
    if (victim.empty()) {
      const auto cs = clients_of(ts);
      if (cs.empty()) throw Error("empty template store");
      victim = cs.front();
    }
    const auto kernel = kernel_from(at.kf);
    const auto cfg = solver_from(at.sf, resolve_c(at.kf));
    EvalReport report;
    if (at.scenario == "key-leak")
      report = simulate_key_leak(ts, kc, victim, kernel, cfg, at.split_seed);
    else if (at.scenario == "template-leak")
      report = simulate_template_leak(ts, kc, victim, kernel, cfg, at.split_seed);
    else
      throw ParseError("unknown scenario: " + at.scenario);
    save_report(report, at.report, at.curve);
    std::cout << "victim=" << victim << " ";
    print_report_summary(report);
  });

  // serve
  auto* serve = app.add_subcommand("serve", "run the authentication server");
  struct {
    std::string host = "127.0.0.1", store;
    int port = 0;
    KernelFlags kf;
    SolverFlags sf;
  } sv;
  serve->add_option("--host", sv.host)->capture_default_str();
  serve->add_option("--port", sv.port, "0 picks an ephemeral port")
      ->capture_default_str();
  serve->add_option("--store", sv.store, "protected store dir for persistence");
  add_kernel_flags(serve, sv.kf);
  add_solver_flags(serve, sv.sf);
  serve->callback([&] {
    ServiceConfig cfg;
    cfg.host = sv.host;
    cfg.port = sv.port;
    cfg.store_dir = sv.store;
    cfg.kernel = kernel_from(sv.kf);
    cfg.solver = solver_from(sv.sf, resolve_c(sv.kf));
    Server server(cfg);
    server.start();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on " << sv.host << ":" << server.port() << std::endl;
    while (!g_stop)
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
  });

  // client
  auto* cl = app.add_subcommand("client", "talk to a server; protects locally");
  struct {
    std::string server, op, templates, keyring, client, claim, sample, key_client;
    double tau = 0.0;
  } ct;
  cl->add_option("--server", ct.server, "host:port")->required();
  cl->add_option("--op", ct.op, "enroll|train|authenticate")->required();
  cl->add_option("--templates", ct.templates, "plain template store");
  cl->add_option("--keyring", ct.keyring, "keyring JSON (stays local)");
  cl->add_option("--client", ct.client, "restrict enroll to one client");
  cl->add_option("--claim", ct.claim, "claimed identity for authenticate");
  cl->add_option("--sample", ct.sample, "sample_id of the query template");
  cl->add_option("--key-client", ct.key_client,
                 "whose key protects the query (default: the claim)");
  cl->add_option("--tau", ct.tau, "accept threshold")->capture_default_str();
  cl->callback([&] {
    const auto colon = ct.server.rfind(':');
    if (colon == std::string::npos)
      throw ParseError("--server must be host:port");
    const std::string host = ct.server.substr(0, colon);
    const int port = std::stoi(ct.server.substr(colon + 1));
    Client client(host, port);

    if (ct.op == "enroll") {
      if (ct.templates.empty() || ct.keyring.empty())
        throw Error("enroll needs --templates and --keyring");
      const auto ts = load_templates(ct.templates);
      const auto kc = load_keyring(ct.keyring);
      std::map<std::string, std::vector<const Template*>> by_client;
      for (const auto& t : ts)
        if (ct.client.empty() || t.client_id == ct.client)
          by_client[t.client_id].push_back(&t);
      if (by_client.empty()) throw Error("no templates selected for enrollment");
      for (const auto& [c, tps] : by_client) {
        const TransformKey& key = kc.key_for(c);
        nlohmann::json vectors = nlohmann::json::array();
        nlohmann::json sample_ids = nlohmann::json::array();
        for (const Template* t : tps) {
          vectors.push_back(protect(*t, key).values);
          sample_ids.push_back(t->sample_id);
        }
        const auto reply = client.request({{"op", "enroll"},
                                           {"client_id", c},
                                           {"key_id", key.key_id},
                                           {"vectors", vectors},
                                           {"sample_ids", sample_ids}});
        std::cout << reply.dump() << "\n";
      }
    } else if (ct.op == "train") {
      std::cout << client.request({{"op", "train"}}).dump() << "\n";
    } else if (ct.op == "authenticate") {
      if (ct.templates.empty() || ct.keyring.empty() || ct.claim.empty() ||
          ct.client.empty() || ct.sample.empty())
        throw Error("authenticate needs --templates --keyring --claim --client "
                    "--sample");
      const auto ts = load_templates(ct.templates);
      const auto kc = load_keyring(ct.keyring);
      const Template* query = nullptr;
      for (const auto& t : ts)
        if (t.client_id == ct.client && t.sample_id == ct.sample) query = &t;
      if (!query)
        throw UnknownClient("no template " + ct.client + "/" + ct.sample);
      const std::string key_owner =
          ct.key_client.empty() ? ct.claim : ct.key_client;
      const auto q = protect(*query, kc.key_for(key_owner));
      const auto reply = client.request({{"op", "authenticate"},
                                         {"claim", ct.claim},
                                         {"tau", ct.tau},
                                         {"vector", q.values}});
      std::cout << reply.dump() << "\n";
    } else {
      throw ParseError("unknown --op: " + ct.op);
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
