// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dkrn/agent.hpp"

namespace httplib {
class Server;
}

namespace dkrn {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path static_dir;  // served at "/" when set
  std::filesystem::path event_log;   // append-only JSONL; disabled when empty
  std::size_t max_turns = 8;
  std::size_t pool_size = 1000;
  double achieve_threshold = 0.9;
  std::uint64_t seed = 1;
  TokenizerConfig tokenizer;
};

struct Session {
  std::string id;
  AgentVariant variant = AgentVariant::dkrn;
  std::string created_at;
  bool reveal_on_end = true;
  ConversationState state;
  Rng rng;
  std::mutex mutex;
};

/// Session-oriented chat over frozen models. Handlers are transport-free so
/// they can be driven directly; mount() binds them to an HTTP server.
class DialogueService {
 public:
  struct Reply {
    int status = 200;
    nlohmann::json body;  // null for bodiless replies
  };

  DialogueService(AgentResources resources, std::vector<Utterance> starts, ServiceConfig config);
  ~DialogueService();

  /// POST /sessions {variant, target?, seed?}
  Reply create_session(const nlohmann::json& request);
  /// POST /sessions/{id}/messages {text}
  Reply post_message(const std::string& id, const nlohmann::json& request);
  /// GET /sessions/{id}
  Reply get_session(const std::string& id);
  /// POST /sessions/{id}/rating {smoothness}
  Reply post_rating(const std::string& id, const nlohmann::json& request);

  std::size_t session_count() const;
  const ServiceConfig& config() const { return config_; }

  void mount(httplib::Server& server);
  /// Blocks serving HTTP until stop(). Returns false if the bind failed.
  bool listen();
  /// Binds to an ephemeral port and serves on a background thread.
  int start_background();
  void stop();

 private:
  std::shared_ptr<Session> find(const std::string& id) const;
  nlohmann::json session_view(const Session& s) const;
  void log_event(nlohmann::json event);

  AgentResources resources_;
  std::vector<Utterance> starts_;
  ServiceConfig config_;
  std::vector<KeywordId> targets_;  // embedded keywords

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 0;

  std::mutex log_mutex_;
  std::ofstream log_;

  struct Runtime;
  std::unique_ptr<Runtime> runtime_;
};

/// Copy of `j` with every string equal to `secret` replaced by "<hidden>" and
/// every object key equal to it dropped.
nlohmann::json redact(const nlohmann::json& j, const std::string& secret);

}  // namespace dkrn
