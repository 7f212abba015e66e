#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ppsvm/errors.hpp"
#include "ppsvm/kernels.hpp"
#include "ppsvm/svm.hpp"
#include "ppsvm/transform.hpp"

namespace ppsvm {

// Newline-delimited JSON over plain TCP. One request line gets exactly one
// response line. The server only ever sees protected vectors; any payload
// that smuggles a "seed" field anywhere is rejected outright.
//
// Requests:
//   {"op":"enroll","client_id":c,"key_id":k,"vectors":[[..],..],
//    "sample_ids":[..]?}
//   {"op":"train"}
//   {"op":"authenticate","claim":c,"tau":t,"vector":[..]}
// Responses:
//   {"op":"result","request":...,...} or
//   {"op":"error","code":CODE,"message":...}
// Codes: BAD_PAYLOAD, DIM_MISMATCH, INSUFFICIENT_DATA, UNKNOWN_CLIENT,
//        NOT_TRAINED.

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 0;  // 0 picks an ephemeral port; read it back via port()
  std::filesystem::path store_dir;  // optional template persistence
  KernelSpec kernel;
  SolverConfig solver;
};

class Server {
 public:
  explicit Server(ServiceConfig cfg);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  void start();
  void stop();
  int port() const { return port_; }

  // Protocol core, exposed for in-process tests: one request in, one
  // response out. Never throws.
  nlohmann::json dispatch(const nlohmann::json& request);
  nlohmann::json dispatch_line(const std::string& line);

 private:
  void accept_loop();
  void serve_connection(int fd);
  void close_connection(int fd);
  nlohmann::json handle_enroll(const nlohmann::json& msg);
  nlohmann::json handle_train(const nlohmann::json& msg);
  nlohmann::json handle_authenticate(const nlohmann::json& msg);
  void persist_store();

  ServiceConfig cfg_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::vector<std::thread> conn_threads_;
  std::set<int> conn_fds_;

  std::mutex store_mu_;
  std::vector<ProtectedTemplate> enrolled_;
  std::map<std::string, SvmModel> models_;
  std::size_t dim_ = 0;
};

// Blocking line-oriented client. Records every byte sent and received so
// tests can audit the wire for leaked key material.
class Client {
 public:
  Client(const std::string& host, int port);
  ~Client();

  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  nlohmann::json request(const nlohmann::json& msg);
  // Sends a raw line (newline appended if missing) and reads one response
  // line. For malformed-input testing.
  std::string raw_request(const std::string& line);

  const std::string& transcript() const { return transcript_; }

 private:
  std::string read_line();

  int fd_ = -1;
  std::string transcript_;
  std::string rbuf_;
};

}  // namespace ppsvm
