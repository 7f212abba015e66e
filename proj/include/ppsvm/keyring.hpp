#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppsvm/errors.hpp"
#include "ppsvm/transform.hpp"

namespace ppsvm {

enum class KeyMode { Common, PerClient };

// Key regime: one shared key for everybody, or one key per client.
class KeyCondition {
 public:
  static KeyCondition common(TransformKey key);
  static KeyCondition per_client(std::map<std::string, TransformKey> keys);

  KeyMode mode() const { return mode_; }

  // Common mode answers every client with the shared key; per-client mode
  // throws MissingKey for clients outside the map.
  const TransformKey& key_for(const std::string& client_id) const;

  const TransformKey& common_key() const;
  const std::map<std::string, TransformKey>& client_keys() const;

 private:
  KeyMode mode_ = KeyMode::Common;
  TransformKey common_;
  std::map<std::string, TransformKey> per_client_;
};

// Deterministic key assignment from one master seed. Per-client seeds are
// derived by folding the client id into the master seed (FNV-1a then
// splitmix64); collisions are re-mixed until all seeds are distinct.
KeyCondition assign_keys(const std::vector<std::string>& client_ids, KeyMode mode,
                         std::uint64_t master_seed, TransformKind kind,
                         std::size_t dim);

std::vector<ProtectedTemplate> protect_dataset(const std::vector<Template>& ts,
                                               const KeyCondition& kc);

void to_json(nlohmann::json& j, const KeyCondition& kc);
void from_json(const nlohmann::json& j, KeyCondition& kc);

}  // namespace ppsvm
