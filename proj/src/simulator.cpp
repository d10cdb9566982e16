// SPDX-License-Identifier: Apache-2.0
#include "dkrn/simulator.hpp"

#include <cstdio>
#include <algorithm>
#include <exception>
#include <numeric>

#include "dkrn/error.hpp"

namespace dkrn {

namespace {

constexpr std::size_t kMaxStartDraws = 100;

std::vector<std::size_t> sample_pool(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  return idx;
}

EpisodeResult run_episode(const AgentResources& res, const SelfPlayConfig& config, const TargetPool& targets,
                          const std::vector<Utterance>& starts, std::size_t episode, std::uint64_t batch_seed) {
  const std::uint64_t seed = derive_seed(batch_seed, episode);
  Rng rng(seed);
  TargetSpec target;
  const Utterance* start = nullptr;
  for (std::size_t draw = 0; draw < kMaxStartDraws; ++draw) {
    const KeywordId k = targets.keywords[uniform_index(rng, targets.keywords.size())];
    target = TargetSpec::make(res.vocab->word(k), *res.vocab, *res.embeddings, config.achieve_threshold);
    start = &starts[uniform_index(rng, starts.size())];
    if (!check_target_achieved(*start, target)) break;
  }
  auto result = self_play(res, config, target, *start, derive_seed(seed, 1));
  result.episode = episode;
  result.seed = seed;
  return result;
}

void check_batch_inputs(const AgentResources& res, const SelfPlayConfig& config, const TargetPool& targets,
                        const std::vector<Utterance>& starts, std::size_t n) {
  if (n == 0) return;
  res.require(config.variant);
  if (targets.keywords.empty()) throw DataError("no eligible self-play targets");
  if (starts.empty()) throw DataError("no start utterances for self-play");
}

}  // namespace

EpisodeResult self_play(const AgentResources& res, const SelfPlayConfig& config, const TargetSpec& target,
                        const Utterance& start, std::uint64_t seed) {
  res.require(config.variant);
  Rng rng(seed);
  const std::size_t bank_size = res.bank->utterances.size();
  auto agent_pool = sample_pool(bank_size, config.pool_size, rng);
  auto user_pool = sample_pool(bank_size, config.pool_size, rng);
  std::sort(user_pool.begin(), user_pool.end());
  Rng agent_rng(derive_seed(seed, 2));

  auto state = start_conversation(target, start, config.max_turns, std::move(agent_pool));
  while (state.status == Status::ongoing) {
    auto reply = respond(state, config.variant, res, agent_rng);
    append_agent(state, std::move(reply.utterance), std::move(reply.diagnostics));
    if (state.status == Status::ongoing) {
      append_user(state, simulated_user_reply(state, res, user_pool, config.user_no_repeat));
    }
    close_exchange(state);
  }
  EpisodeResult r;
  r.seed = seed;
  r.target = target.word;
  r.success = state.status == Status::success;
  r.turns = state.turn_count;
  r.transcript = std::move(state);
  return r;
}

TargetPool eligible_targets(const AgentResources& res, bool sample_all_targets) {
  if (!res.vocab || !res.embeddings) throw ConfigError("target sampling needs the vocabulary and embeddings");
  if (!sample_all_targets && !res.graph) throw ConfigError("target sampling needs the keyword graph");
  TargetPool pool;
  for (KeywordId k = 0; k < res.vocab->size(); ++k) {
    const bool embedded = res.embeddings->contains(res.vocab->word(k));
    const bool reachable = sample_all_targets || res.graph->has_inbound(k);
    if (embedded && reachable) {
      pool.keywords.push_back(k);
    } else {
      ++pool.excluded;
    }
  }
  return pool;
}

void aggregate(BatchReport& report) {
  report.successes = 0;
  std::size_t turns_success = 0, turns_all = 0;
  for (const auto& e : report.episodes) {
    turns_all += e.turns;
    if (e.success) {
      ++report.successes;
      turns_success += e.turns;
    }
  }
  const auto n = report.episodes.size();
  report.success_rate = n ? static_cast<double>(report.successes) / static_cast<double>(n) : 0.0;
  report.mean_turns_success =
      report.successes ? static_cast<double>(turns_success) / static_cast<double>(report.successes) : 0.0;
  report.mean_turns_all = n ? static_cast<double>(turns_all) / static_cast<double>(n) : 0.0;
}

BatchReport run_batch(const AgentResources& res, const SelfPlayConfig& config, const std::vector<Utterance>& starts,
                      std::size_t n_episodes, std::uint64_t seed) {
  BatchReport report;
  report.variant = config.variant;
  report.seed = seed;
  report.max_turns = config.max_turns;
  if (n_episodes == 0) return report;
  const auto targets = eligible_targets(res, config.sample_all_targets);
  check_batch_inputs(res, config, targets, starts, n_episodes);
  report.excluded_targets = targets.excluded;
  report.episodes.resize(n_episodes);

  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(n_episodes);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      report.episodes[static_cast<std::size_t>(i)] =
          run_episode(res, config, targets, starts, static_cast<std::size_t>(i), seed);
    } catch (...) {
#pragma omp critical(dkrn_selfplay_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  aggregate(report);
  return report;
}

BatchReport run_batch_serial(const AgentResources& res, const SelfPlayConfig& config,
                             const std::vector<Utterance>& starts, std::size_t n_episodes, std::uint64_t seed) {
  BatchReport report;
  report.variant = config.variant;
  report.seed = seed;
  report.max_turns = config.max_turns;
  if (n_episodes == 0) return report;
  const auto targets = eligible_targets(res, config.sample_all_targets);
  check_batch_inputs(res, config, targets, starts, n_episodes);
  report.excluded_targets = targets.excluded;
  for (std::size_t i = 0; i < n_episodes; ++i) report.episodes.push_back(run_episode(res, config, targets, starts, i, seed));
  aggregate(report);
  return report;
}

std::string format_batch_report(const BatchReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "# selfplay variant=%s seed=%llu episodes=%zu max_turns=%zu excluded_targets=%zu\n",
                std::string(to_string(r.variant)).c_str(), static_cast<unsigned long long>(r.seed), r.episodes.size(),
                r.max_turns, r.excluded_targets);
  out += buf;
  out += "episode\tseed\ttarget\tsuccess\tturns\n";
  for (const auto& e : r.episodes) {
    std::snprintf(buf, sizeof buf, "%zu\t%llu\t", e.episode, static_cast<unsigned long long>(e.seed));
    out += buf;
    out += e.target;
    std::snprintf(buf, sizeof buf, "\t%d\t%zu\n", e.success ? 1 : 0, e.turns);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "# aggregate\nepisodes\t%zu\nsuccesses\t%zu\nsuccess_rate\t%.6f\nmean_turns_success\t%.6f\n"
                "mean_turns_all\t%.6f\n",
                r.episodes.size(), r.successes, r.success_rate, r.mean_turns_success, r.mean_turns_all);
  out += buf;
  return out;
}

std::string format_selfplay_table(const std::vector<BatchReport>& reports) {
  std::string out = "system\tSucc.(%)\t#Turns\t#Turns(all)\tepisodes\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s\t%.2f\t%.2f\t%.2f\t%zu\n", std::string(to_string(r.variant)).c_str(),
                  100.0 * r.success_rate, r.mean_turns_success, r.mean_turns_all, r.episodes.size());
    out += buf;
  }
  return out;
}

}  // namespace dkrn
