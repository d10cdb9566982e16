// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dkrn/agent.hpp"

namespace dkrn {

struct SelfPlayConfig {
  AgentVariant variant = AgentVariant::dkrn;
  std::size_t max_turns = 8;
  std::size_t pool_size = 1000;    // candidates per side, sampled from the bank
  bool user_no_repeat = false;
  bool sample_all_targets = false;  // include keywords with no inbound edges
  double achieve_threshold = 0.9;
  ChooseMode mode = ChooseMode::greedy;
};

struct EpisodeResult {
  std::size_t episode = 0;
  std::uint64_t seed = 0;
  std::string target;
  bool success = false;
  std::size_t turns = 0;
  ConversationState transcript;
};

/// One agent-vs-simulated-user conversation. Deterministic given the seed.
EpisodeResult self_play(const AgentResources& resources, const SelfPlayConfig& config, const TargetSpec& target,
                        const Utterance& start, std::uint64_t seed);

/// Keywords eligible as self-play targets: embedded, and (unless
/// sample_all_targets) with at least one inbound graph edge.
struct TargetPool {
  std::vector<KeywordId> keywords;
  std::size_t excluded = 0;
};
TargetPool eligible_targets(const AgentResources& resources, bool sample_all_targets);

struct BatchReport {
  AgentVariant variant = AgentVariant::dkrn;
  std::uint64_t seed = 0;
  std::size_t max_turns = 8;
  std::size_t excluded_targets = 0;
  std::size_t successes = 0;
  double success_rate = 0;
  double mean_turns_success = 0;  // 0 when nothing succeeded
  double mean_turns_all = 0;
  std::vector<EpisodeResult> episodes;  // by episode index
};

/// n_episodes episodes; episode i uses seed derive_seed(seed, i) to draw its
/// target, start utterance (from `starts`) and candidate pools.
BatchReport run_batch(const AgentResources& resources, const SelfPlayConfig& config,
                      const std::vector<Utterance>& starts, std::size_t n_episodes, std::uint64_t seed);
/// Single-threaded reference of run_batch().
BatchReport run_batch_serial(const AgentResources& resources, const SelfPlayConfig& config,
                             const std::vector<Utterance>& starts, std::size_t n_episodes, std::uint64_t seed);

/// Aggregates over episode results; order-insensitive.
void aggregate(BatchReport& report);

/// Per-episode lines "episode\tseed\ttarget\tsuccess\tturns" followed by the
/// aggregate block.
std::string format_batch_report(const BatchReport& report);
/// "system\tSucc.(%)\t#Turns" rows, one per report.
std::string format_selfplay_table(const std::vector<BatchReport>& reports);

}  // namespace dkrn
