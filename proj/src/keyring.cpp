#include "ppsvm/keyring.hpp"

#include <algorithm>
#include <set>

#include "ppsvm/rng.hpp"

namespace ppsvm {

KeyCondition KeyCondition::common(TransformKey key) {
  KeyCondition kc;
  kc.mode_ = KeyMode::Common;
  kc.common_ = std::move(key);
  return kc;
}

KeyCondition KeyCondition::per_client(std::map<std::string, TransformKey> keys) {
  KeyCondition kc;
  kc.mode_ = KeyMode::PerClient;
  kc.per_client_ = std::move(keys);
  return kc;
}

const TransformKey& KeyCondition::key_for(const std::string& client_id) const {
  if (mode_ == KeyMode::Common) return common_;
  auto it = per_client_.find(client_id);
  if (it == per_client_.end())
    throw MissingKey("no key assigned to client " + client_id);
  return it->second;
}

const TransformKey& KeyCondition::common_key() const {
  if (mode_ != KeyMode::Common) throw Error("key condition is not common-key");
  return common_;
}

const std::map<std::string, TransformKey>& KeyCondition::client_keys() const {
  return per_client_;
}

KeyCondition assign_keys(const std::vector<std::string>& client_ids, KeyMode mode,
                         std::uint64_t master_seed, TransformKind kind,
                         std::size_t dim) {
  if (client_ids.empty()) throw Error("assign_keys needs at least one client");
  if (dim < 1) throw DimensionMismatch("key dimension must be >= 1");

  if (mode == KeyMode::Common) {
    TransformKey k;
    k.key_id = "k:common";
    k.seed = splitmix64(master_seed);
    k.kind = kind;
    k.dim = dim;
    return KeyCondition::common(std::move(k));
  }

  // Sorted processing makes collision fixes independent of input order.
  std::set<std::string> sorted(client_ids.begin(), client_ids.end());
  std::set<std::uint64_t> used;
  std::map<std::string, TransformKey> keys;
  for (const auto& c : sorted) {
    std::uint64_t seed = splitmix64(master_seed ^ fnv1a64(c));
    while (!used.insert(seed).second) seed = splitmix64(seed);
    TransformKey k;
    k.key_id = "k:" + c;
    k.seed = seed;
    k.kind = kind;
    k.dim = dim;
    keys.emplace(c, std::move(k));
  }
  return KeyCondition::per_client(std::move(keys));
}

std::vector<ProtectedTemplate> protect_dataset(const std::vector<Template>& ts,
                                               const KeyCondition& kc) {
  // Group by client so each key's matrix is expanded once.
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ts.size(); ++i)
    groups[ts[i].client_id].push_back(i);

  std::vector<ProtectedTemplate> out(ts.size());
  for (const auto& [client, idxs] : groups) {
    const TransformKey& key = kc.key_for(client);
    for (std::size_t i : idxs) out[i] = protect(ts[i], key);
  }
  return out;
}

namespace {

nlohmann::json key_record(const TransformKey& k) {
  return nlohmann::json{{"seed", k.seed},
                        {"kind", std::string(to_string(k.kind))},
                        {"dim", k.dim}};
}

TransformKey key_from_record(const std::string& key_id, const nlohmann::json& j) {
  TransformKey k;
  k.key_id = key_id;
  k.seed = j.at("seed").get<std::uint64_t>();
  k.kind = transform_kind_from_string(j.at("kind").get<std::string>());
  k.dim = j.at("dim").get<std::size_t>();
  return k;
}

}  // namespace

// File layout: a registry of key material by key_id plus the client
// assignment. "*" marks the shared slot in common mode.
void to_json(nlohmann::json& j, const KeyCondition& kc) {
  nlohmann::json registry = nlohmann::json::object();
  nlohmann::json assignment = nlohmann::json::object();
  if (kc.mode() == KeyMode::Common) {
    registry[kc.common_key().key_id] = key_record(kc.common_key());
    assignment["*"] = kc.common_key().key_id;
  } else {
    for (const auto& [client, key] : kc.client_keys()) {
      registry[key.key_id] = key_record(key);
      assignment[client] = key.key_id;
    }
  }
  j = nlohmann::json{{"schema_version", 1},
                     {"mode", kc.mode() == KeyMode::Common ? "common" : "per_client"},
                     {"registry", registry},
                     {"assignment", assignment}};
}

void from_json(const nlohmann::json& j, KeyCondition& kc) {
  if (j.value("schema_version", 0) != 1)
    throw SchemaVersionMismatch("unsupported keyring schema_version");
  const auto mode = j.at("mode").get<std::string>();
  const auto& registry = j.at("registry");
  const auto& assignment = j.at("assignment");
  if (mode == "common") {
    const auto key_id = assignment.at("*").get<std::string>();
    kc = KeyCondition::common(key_from_record(key_id, registry.at(key_id)));
  } else if (mode == "per_client") {
    std::map<std::string, TransformKey> keys;
    for (const auto& [client, id] : assignment.items()) {
      const auto key_id = id.get<std::string>();
      keys.emplace(client, key_from_record(key_id, registry.at(key_id)));
    }
    kc = KeyCondition::per_client(std::move(keys));
  } else {
    throw ParseError("unknown keyring mode: " + mode);
  }
}

}  // namespace ppsvm
