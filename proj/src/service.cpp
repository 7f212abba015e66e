#include "ppsvm/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <set>

#include "ppsvm/store.hpp"
#include "ppsvm/vecmath.hpp"

namespace ppsvm {

namespace {

constexpr std::size_t kMaxLine = 8u << 20;

nlohmann::json error_response(const char* code, const std::string& message) {
  return nlohmann::json{{"op", "error"}, {"code", code}, {"message", message}};
}

// Key material must never reach the server. Reject any request that carries
// a "seed" key at any nesting depth.
bool contains_seed_key(const nlohmann::json& j) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (k == "seed") return true;
      if (contains_seed_key(v)) return true;
    }
  } else if (j.is_array()) {
    for (const auto& v : j)
      if (contains_seed_key(v)) return true;
  }
  return false;
}

bool send_all(int fd, const char* data, std::size_t len) {
  while (len > 0) {
    const ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n <= 0) return false;
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

Server::Server(ServiceConfig cfg) : cfg_(std::move(cfg)) {
  if (!cfg_.store_dir.empty() &&
      std::filesystem::exists(cfg_.store_dir / "manifest.json")) {
    enrolled_ = load_protected(cfg_.store_dir);
    if (!enrolled_.empty()) dim_ = enrolled_.front().values.size();
  }
}

Server::~Server() { stop(); }

void Server::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw IoError("socket() failed");
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);

  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(cfg_.port));
  if (::inet_pton(AF_INET, cfg_.host.c_str(), &addr.sin_addr) != 1)
    throw IoError("bad listen address " + cfg_.host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw IoError("bind failed on " + cfg_.host + ":" + std::to_string(cfg_.port));
  }
  socklen_t alen = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &alen);
  port_ = ntohs(addr.sin_port);
  if (::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw IoError("listen failed");
  }
  running_ = true;
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> conns;
  {
    std::lock_guard<std::mutex> lock(conn_mu_);
    // Wake connection threads parked in recv(); each closes its own fd.
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    conns.swap(conn_threads_);
  }
  for (auto& t : conns)
    if (t.joinable()) t.join();
}

void Server::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (!running_) break;
      continue;
    }
    std::lock_guard<std::mutex> lock(conn_mu_);
    conn_fds_.insert(fd);
    conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void Server::serve_connection(int fd) {
  std::string buf;
  char chunk[4096];
  while (running_) {
    const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buf.append(chunk, static_cast<std::size_t>(n));
    if (buf.size() > kMaxLine) break;  // refuse unbounded lines

    std::size_t pos;
    while ((pos = buf.find('\n')) != std::string::npos) {
      std::string line = buf.substr(0, pos);
      buf.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      const std::string reply = dispatch_line(line).dump() + "\n";
      if (!send_all(fd, reply.data(), reply.size())) {
        close_connection(fd);
        return;
      }
    }
  }
  close_connection(fd);
}

// Erase-and-close under the lock so stop() can never shut down a recycled
// descriptor number.
void Server::close_connection(int fd) {
  std::lock_guard<std::mutex> lock(conn_mu_);
  conn_fds_.erase(fd);
  ::close(fd);
}

nlohmann::json Server::dispatch_line(const std::string& line) {
  nlohmann::json msg = nlohmann::json::parse(line, nullptr, false);
  if (msg.is_discarded())
    return error_response("BAD_PAYLOAD", "request is not valid JSON");
  return dispatch(msg);
}

nlohmann::json Server::dispatch(const nlohmann::json& request) {
  try {
    if (!request.is_object())
      return error_response("BAD_PAYLOAD", "request must be a JSON object");
    if (contains_seed_key(request))
      return error_response("BAD_PAYLOAD",
                            "request carries secret key material (seed)");
    const auto op = request.value("op", std::string());
    if (op == "enroll") return handle_enroll(request);
    if (op == "train") return handle_train(request);
    if (op == "authenticate") return handle_authenticate(request);
    return error_response("BAD_PAYLOAD", "unknown op '" + op + "'");
  } catch (const nlohmann::json::exception& e) {
    return error_response("BAD_PAYLOAD", e.what());
  } catch (const DimensionMismatch& e) {
    return error_response("DIM_MISMATCH", e.what());
  } catch (const Error& e) {
    return error_response("BAD_PAYLOAD", e.what());
  } catch (const std::exception& e) {
    return error_response("BAD_PAYLOAD", e.what());
  }
}

nlohmann::json Server::handle_enroll(const nlohmann::json& msg) {
  if (!msg.contains("client_id") || !msg["client_id"].is_string() ||
      !msg.contains("key_id") || !msg["key_id"].is_string() ||
      !msg.contains("vectors") || !msg["vectors"].is_array())
    return error_response("BAD_PAYLOAD",
                          "enroll needs client_id, key_id and vectors");
  const auto client = msg["client_id"].get<std::string>();
  const auto key_id = msg["key_id"].get<std::string>();
  if (client.empty() || key_id.empty())
    return error_response("BAD_PAYLOAD", "client_id and key_id must be non-empty");

  std::vector<std::vector<double>> vectors;
  for (const auto& v : msg["vectors"]) {
    if (!v.is_array())
      return error_response("BAD_PAYLOAD", "vectors must be arrays of numbers");
    std::vector<double> vec;
    vec.reserve(v.size());
    for (const auto& x : v) {
      if (!x.is_number())
        return error_response("BAD_PAYLOAD", "vector entries must be numbers");
      vec.push_back(x.get<double>());
    }
    if (!all_finite(vec))
      return error_response("BAD_PAYLOAD", "vector entries must be finite");
    vectors.push_back(std::move(vec));
  }
  if (vectors.empty())
    return error_response("BAD_PAYLOAD", "enroll carries no vectors");

  std::vector<std::string> sample_ids;
  if (msg.contains("sample_ids")) {
    if (!msg["sample_ids"].is_array() || msg["sample_ids"].size() != vectors.size())
      return error_response("BAD_PAYLOAD",
                            "sample_ids must parallel vectors");
    for (const auto& s : msg["sample_ids"]) {
      if (!s.is_string())
        return error_response("BAD_PAYLOAD", "sample_ids must be strings");
      sample_ids.push_back(s.get<std::string>());
    }
  }

  std::lock_guard<std::mutex> lock(store_mu_);
  const std::size_t d = vectors.front().size();
  if (d == 0) return error_response("BAD_PAYLOAD", "vectors must be non-empty");
  if (dim_ == 0) dim_ = d;
  for (const auto& v : vectors)
    if (v.size() != dim_)
      return error_response("DIM_MISMATCH",
                            "vector length " + std::to_string(v.size()) +
                                " != enrolled dimension " + std::to_string(dim_));

  for (std::size_t i = 0; i < vectors.size(); ++i) {
    ProtectedTemplate p;
    p.client_id = client;
    p.sample_id = sample_ids.empty()
                      ? "s" + std::to_string(enrolled_.size() + 1)
                      : sample_ids[i];
    p.key_id = key_id;
    p.values = std::move(vectors[i]);
    enrolled_.push_back(std::move(p));
  }
  models_.clear();  // stale after new enrollments
  persist_store();

  return nlohmann::json{{"op", "result"},
                        {"request", "enroll"},
                        {"count", msg["vectors"].size()},
                        {"total", enrolled_.size()}};
}

nlohmann::json Server::handle_train(const nlohmann::json&) {
  std::lock_guard<std::mutex> lock(store_mu_);
  std::set<std::string> clients;
  for (const auto& t : enrolled_) clients.insert(t.client_id);
  if (clients.size() < 2)
    return error_response("INSUFFICIENT_DATA",
                          "training needs at least 2 enrolled clients, have " +
                              std::to_string(clients.size()));

  models_ = train_one_vs_rest(enrolled_, cfg_.kernel, cfg_.solver);

  nlohmann::json summary = nlohmann::json::array();
  for (const auto& [client, model] : models_)
    summary.push_back(nlohmann::json{
        {"client_id", client}, {"support_vectors", model.support_vectors.size()}});
  return nlohmann::json{{"op", "result"}, {"request", "train"},
                        {"models", summary}};
}

nlohmann::json Server::handle_authenticate(const nlohmann::json& msg) {
  if (!msg.contains("claim") || !msg["claim"].is_string() ||
      !msg.contains("tau") || !msg["tau"].is_number() ||
      !msg.contains("vector") || !msg["vector"].is_array())
    return error_response("BAD_PAYLOAD",
                          "authenticate needs claim, tau and vector");
  const auto claim = msg["claim"].get<std::string>();
  const double tau = msg["tau"].get<double>();
  std::vector<double> vec;
  for (const auto& x : msg["vector"]) {
    if (!x.is_number())
      return error_response("BAD_PAYLOAD", "vector entries must be numbers");
    vec.push_back(x.get<double>());
  }
  if (!all_finite(vec))
    return error_response("BAD_PAYLOAD", "vector entries must be finite");

  std::lock_guard<std::mutex> lock(store_mu_);
  if (models_.empty())
    return error_response("NOT_TRAINED", "no trained models; send train first");
  auto it = models_.find(claim);
  if (it == models_.end())
    return error_response("UNKNOWN_CLIENT", "no model for client " + claim);
  if (vec.size() != dim_)
    return error_response("DIM_MISMATCH",
                          "query length " + std::to_string(vec.size()) +
                              " != enrolled dimension " + std::to_string(dim_));

  ProtectedTemplate q;
  q.client_id = claim;
  q.sample_id = "query";
  q.key_id = it->second.trained_on_key.empty() ? "unknown"
                                               : it->second.trained_on_key;
  q.values = std::move(vec);
  const AuthResult r = authenticate(it->second, q, tau);
  return nlohmann::json{{"op", "result"},
                        {"request", "authenticate"},
                        {"decision", r.accept ? "accept" : "reject"},
                        {"score", r.score}};
}

void Server::persist_store() {
  if (cfg_.store_dir.empty()) return;
  save_protected(enrolled_, cfg_.store_dir);
}

Client::Client(const std::string& host, int port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw IoError("socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw IoError("bad server address " + host);
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    ::close(fd_);
    throw IoError("cannot connect to " + host + ":" + std::to_string(port));
  }
}

Client::~Client() {
  if (fd_ >= 0) ::close(fd_);
}

nlohmann::json Client::request(const nlohmann::json& msg) {
  const std::string reply = raw_request(msg.dump());
  return nlohmann::json::parse(reply);
}

std::string Client::raw_request(const std::string& line) {
  std::string out = line;
  if (out.empty() || out.back() != '\n') out.push_back('\n');
  transcript_ += out;
  if (!send_all(fd_, out.data(), out.size()))
    throw IoError("send failed (connection closed?)");
  return read_line();
}

std::string Client::read_line() {
  for (;;) {
    const std::size_t pos = rbuf_.find('\n');
    if (pos != std::string::npos) {
      std::string line = rbuf_.substr(0, pos);
      rbuf_.erase(0, pos + 1);
      return line;
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n <= 0) throw IoError("connection closed while awaiting response");
    rbuf_.append(chunk, static_cast<std::size_t>(n));
    transcript_.append(chunk, static_cast<std::size_t>(n));
  }
}

}  // namespace ppsvm
