// SPDX-License-Identifier: Apache-2.0
#include "dkrn/service.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <numeric>
#include <thread>

#include <httplib.h>

#include "dkrn/error.hpp"

namespace dkrn {

namespace {

constexpr std::size_t kMaxOpeningDraws = 100;
constexpr const char* kHidden = "<hidden>";

DialogueService::Reply error_reply(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex_id(std::uint64_t x) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

nlohmann::json utterance_json(const Utterance& u, const KeywordVocabulary& vocab) {
  auto kws = nlohmann::json::array();
  for (KeywordId k : u.keywords) kws.push_back(vocab.word(k));
  return {{"speaker", std::string(to_string(u.speaker))}, {"text", u.text}, {"keywords", kws}};
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  return idx;
}

}  // namespace

nlohmann::json redact(const nlohmann::json& j, const std::string& secret) {
  if (j.is_string()) return j.get<std::string>() == secret ? nlohmann::json(kHidden) : j;
  if (j.is_array()) {
    auto out = nlohmann::json::array();
    for (const auto& x : j) out.push_back(redact(x, secret));
    return out;
  }
  if (j.is_object()) {
    auto out = nlohmann::json::object();
    for (const auto& [k, v] : j.items()) {
      if (k != secret) out[k] = redact(v, secret);
    }
    return out;
  }
  return j;
}

struct DialogueService::Runtime {
  httplib::Server server;
  std::thread thread;
};

DialogueService::DialogueService(AgentResources resources, std::vector<Utterance> starts, ServiceConfig config)
    : resources_(resources), starts_(std::move(starts)), config_(std::move(config)) {
  if (!resources_.vocab || !resources_.embeddings || !resources_.bank) {
    throw ConfigError("service needs the vocabulary, embeddings and candidate bank");
  }
  if (starts_.empty()) throw DataError("service needs at least one opening utterance");
  if (config_.max_turns == 0 || config_.pool_size == 0) throw ConfigError("max_turns and pool_size must be positive");
  for (KeywordId k = 0; k < resources_.vocab->size(); ++k) {
    if (resources_.embeddings->contains(resources_.vocab->word(k))) targets_.push_back(k);
  }
  if (targets_.empty()) throw DataError("no vocabulary keyword has an embedding");
  if (!config_.event_log.empty()) {
    log_.open(config_.event_log, std::ios::app);
    if (!log_) throw DataError("cannot open event log " + config_.event_log.string());
  }
}

DialogueService::~DialogueService() { stop(); }

void DialogueService::log_event(nlohmann::json event) {
  if (!log_.is_open()) return;
  event["time"] = utc_now();
  std::lock_guard lock(log_mutex_);
  log_ << event.dump() << '\n';
  log_.flush();
}

std::size_t DialogueService::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

std::shared_ptr<Session> DialogueService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

nlohmann::json DialogueService::session_view(const Session& s) const {
  const auto& st = s.state;
  nlohmann::json j = transcript_json(st, *resources_.vocab);
  j["session_id"] = s.id;
  j["variant"] = std::string(to_string(s.variant));
  j["created_at"] = s.created_at;
  if (st.status == Status::ongoing) {
    j.erase("target");
    return redact(j, st.target.word);
  }
  if (!s.reveal_on_end) j.erase("target");
  return j;
}

DialogueService::Reply DialogueService::create_session(const nlohmann::json& request) {
  if (!request.is_object()) return error_reply(400, "request body must be a JSON object");
  if (!request.contains("variant") || !request["variant"].is_string()) {
    return error_reply(400, "missing string field 'variant'");
  }
  const auto variant = parse_variant(request["variant"].get<std::string>());
  if (!variant) return error_reply(400, "unknown variant '" + request["variant"].get<std::string>() + "'");
  try {
    resources_.require(*variant);
  } catch (const ConfigError& e) {
    return error_reply(400, e.what());
  }

  auto session = std::make_shared<Session>();
  std::uint64_t counter;
  {
    std::lock_guard lock(sessions_mutex_);
    counter = next_session_++;
  }
  std::uint64_t seed = derive_seed(config_.seed, counter);
  if (request.contains("seed")) {
    const auto& v = request["seed"];
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      return error_reply(400, "'seed' must be a non-negative integer");
    }
    seed = request["seed"].get<std::uint64_t>();
  }
  session->rng.seed(seed);
  session->variant = *variant;
  session->created_at = utc_now();
  if (request.contains("reveal_on_end")) {
    if (!request["reveal_on_end"].is_boolean()) return error_reply(400, "'reveal_on_end' must be a boolean");
    session->reveal_on_end = request["reveal_on_end"].get<bool>();
  }

  const bool explicit_target = request.contains("target") && !request["target"].is_null();
  std::string target_word;
  if (explicit_target) {
    if (!request["target"].is_string()) return error_reply(400, "'target' must be a string");
    target_word = request["target"].get<std::string>();
  }
  TargetSpec target;
  const Utterance* opening = nullptr;
  for (std::size_t draw = 0; draw < kMaxOpeningDraws; ++draw) {
    if (!explicit_target) target_word = resources_.vocab->word(targets_[uniform_index(session->rng, targets_.size())]);
    try {
      target = TargetSpec::make(target_word, *resources_.vocab, *resources_.embeddings, config_.achieve_threshold);
    } catch (const ConfigError& e) {
      return error_reply(400, e.what());
    }
    opening = &starts_[uniform_index(session->rng, starts_.size())];
    if (!check_target_achieved(*opening, target)) break;
  }
  auto pool = sample_indices(resources_.bank->utterances.size(), config_.pool_size, session->rng);
  session->state = start_conversation(std::move(target), *opening, config_.max_turns, std::move(pool), Speaker::agent);

  {
    std::lock_guard lock(sessions_mutex_);
    std::string id = hex_id(derive_seed(config_.seed ^ 0x5e5510ULL, counter));
    while (sessions_.contains(id)) id = hex_id(splitmix64(std::stoull(id, nullptr, 16)));
    session->id = id;
    sessions_[id] = session;
  }
  log_event({{"event", "session_created"},
             {"session", session->id},
             {"variant", std::string(to_string(session->variant))},
             {"target", session->state.target.word},
             {"seed", seed},
             {"opening", session->state.utterances.front().text}});

  nlohmann::json body{{"session_id", session->id},
                      {"variant", std::string(to_string(session->variant))},
                      {"status", std::string(to_string(session->state.status))},
                      {"max_turns", session->state.max_turns},
                      {"opening_utterance", utterance_json(session->state.utterances.front(), *resources_.vocab)}};
  if (session->state.status != Status::ongoing) {
    body["target"] = session->state.target.word;
    return {201, body};
  }
  return {201, redact(body, session->state.target.word)};
}

DialogueService::Reply DialogueService::post_message(const std::string& id, const nlohmann::json& request) {
  auto session = find(id);
  if (!session) return error_reply(404, "unknown session '" + id + "'");
  if (!request.is_object() || !request.contains("text") || !request["text"].is_string()) {
    return error_reply(400, "missing string field 'text'");
  }
  std::lock_guard lock(session->mutex);
  auto& st = session->state;
  if (st.status != Status::ongoing) return error_reply(409, "session is already " + std::string(to_string(st.status)));

  Utterance user;
  user.speaker = Speaker::user;
  user.text = request["text"].get<std::string>();
  user.tokens = tokenize(user.text, config_.tokenizer);
  annotate_keywords(user, *resources_.vocab);
  append_user(st, user);
  log_event({{"event", "user_message"}, {"session", id}, {"text", user.text}, {"status", std::string(to_string(st.status))}});

  nlohmann::json body{{"session_id", id}};
  body["agent_utterance"] = nullptr;
  body["diagnostics"] = nullptr;
  if (st.status == Status::ongoing) {
    try {
      auto reply = respond(st, session->variant, resources_, session->rng);
      body["diagnostics"] = diagnostics_json(reply.diagnostics, *resources_.vocab);
      append_agent(st, reply.utterance, reply.diagnostics);
      close_exchange(st);
      body["agent_utterance"] = utterance_json(st.utterances.back(), *resources_.vocab);
      body["diagnostics"]["threshold_after"] = st.guidance.threshold;
      log_event({{"event", "agent_message"},
                 {"session", id},
                 {"text", st.utterances.back().text},
                 {"diagnostics", body["diagnostics"]},
                 {"status", std::string(to_string(st.status))}});
    } catch (const Error& e) {
      return error_reply(500, e.what());
    }
  }
  body["status"] = std::string(to_string(st.status));
  body["turn"] = st.turn_count;
  body["max_turns"] = st.max_turns;
  body["threshold"] = st.guidance.threshold;
  if (st.status == Status::ongoing) return {200, redact(body, st.target.word)};
  if (session->reveal_on_end) body["target"] = st.target.word;
  log_event({{"event", "session_ended"}, {"session", id}, {"status", body["status"]}, {"turns", st.turn_count}});
  return {200, body};
}

DialogueService::Reply DialogueService::get_session(const std::string& id) {
  auto session = find(id);
  if (!session) return error_reply(404, "unknown session '" + id + "'");
  std::lock_guard lock(session->mutex);
  return {200, session_view(*session)};
}

DialogueService::Reply DialogueService::post_rating(const std::string& id, const nlohmann::json& request) {
  auto session = find(id);
  if (!session) return error_reply(404, "unknown session '" + id + "'");
  if (!request.is_object() || !request.contains("smoothness")) return error_reply(422, "missing field 'smoothness'");
  const auto& v = request["smoothness"];
  if (!v.is_number_integer()) return error_reply(422, "'smoothness' must be an integer from 1 to 5");
  const auto score = v.get<long long>();
  if (score < 1 || score > 5) return error_reply(422, "'smoothness' must be an integer from 1 to 5");
  std::lock_guard lock(session->mutex);
  if (session->state.status == Status::ongoing) return error_reply(409, "session is still ongoing");
  log_event({{"event", "rating"},
             {"session", id},
             {"variant", std::string(to_string(session->variant))},
             {"smoothness", score},
             {"status", std::string(to_string(session->state.status))},
             {"turns", session->state.turn_count}});
  return {204, nullptr};
}

void DialogueService::mount(httplib::Server& server) {
  const auto send = [](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    if (!r.body.is_null()) res.set_content(r.body.dump(), "application/json");
  };
  const auto parse = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
    if (req.body.empty()) return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  };
  const auto bad_json = [send](httplib::Response& res) { send(res, error_reply(400, "request body is not valid JSON")); };

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

  server.Get("/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, {200, {{"status", "ok"}, {"sessions", session_count()}}});
  });
  server.Post("/sessions", [this, send, parse, bad_json](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse(req);
    if (!body) return bad_json(res);
    send(res, create_session(*body));
  });
  server.Post(R"(/sessions/([^/]+)/messages)",
              [this, send, parse, bad_json](const httplib::Request& req, httplib::Response& res) {
                const auto body = parse(req);
                if (!body) return bad_json(res);
                send(res, post_message(req.matches[1], *body));
              });
  server.Post(R"(/sessions/([^/]+)/rating)",
              [this, send, parse, bad_json](const httplib::Request& req, httplib::Response& res) {
                const auto body = parse(req);
                if (!body) return bad_json(res);
                send(res, post_rating(req.matches[1], *body));
              });
  server.Get(R"(/sessions/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, get_session(req.matches[1]));
  });
  if (!config_.static_dir.empty()) {
    if (!server.set_mount_point("/", config_.static_dir.string())) {
      throw ConfigError("static directory does not exist: " + config_.static_dir.string());
    }
  }
}

bool DialogueService::listen() {
  if (!runtime_) runtime_ = std::make_unique<Runtime>();
  mount(runtime_->server);
  return runtime_->server.listen(config_.host, config_.port);
}

int DialogueService::start_background() {
  if (runtime_) throw StateError("service is already running");
  runtime_ = std::make_unique<Runtime>();
  mount(runtime_->server);
  const int port = runtime_->server.bind_to_any_port(config_.host);
  if (port <= 0) throw Error("could not bind to " + config_.host);
  runtime_->thread = std::thread([this] { runtime_->server.listen_after_bind(); });
  runtime_->server.wait_until_ready();
  return port;
}

void DialogueService::stop() {
  if (!runtime_) return;
  runtime_->server.stop();
  if (runtime_->thread.joinable()) runtime_->thread.join();
  runtime_.reset();
}

}  // namespace dkrn
