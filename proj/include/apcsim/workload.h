#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "apcsim/token_model.h"

namespace apcsim {

struct Request {
  RequestId id = 0;
  UserId user = 0;
  double arrival_ms = 0.0;
  std::vector<TokenId> tokens;

  friend bool operator==(const Request&, const Request&) = default;
};

enum class ReuseLevel { kZero, kLow, kModerate, kHigh };
enum class SecretPosition { kHead, kMiddle, kTail };

// 0, 0.2, 0.5, 0.9
double reuse_probability(ReuseLevel level);
const char* to_string(ReuseLevel level);
const char* to_string(SecretPosition pos);
std::optional<ReuseLevel> parse_reuse_level(const std::string& s);
std::optional<SecretPosition> parse_secret_position(const std::string& s);

struct WorkloadSpec {
  size_t users = 10;
  size_t requests_per_user = 100;
  double arrival_rps = 1.0;
  ReuseLevel intra_reuse = ReuseLevel::kHigh;
  ReuseLevel inter_reuse = ReuseLevel::kZero;
  // length of a full stem; each stem is cut to a fixed [ceil(P/2), P] blocks
  size_t prompt_blocks = 8;
  SecretPosition secret_position = SecretPosition::kMiddle;
  size_t vocabulary_size = 32000;
  size_t block_size = 16;
  // prompt content
  uint64_t seed = 1;
  // arrival gaps and user interleaving
  uint64_t arrival_seed = 2;
};

// Throws std::invalid_argument naming the offending field.
void validate(const WorkloadSpec& spec);

// Five reference workloads, numbered 1..5:
//   1 (high intra, zero inter)   2 (high, moderate)   3 (moderate, moderate)
//   4 (high, high)               5 (zero, high)
WorkloadSpec preset_workload(int number);

// Multi-user workload with Poisson arrivals, sorted by arrival; ids follow
// arrival order starting at first_id.
//
// Every prompt is  stem[0, L) with the user's secret block spliced in at the
// secret position, followed by a fresh question of 8..32 tokens. With
// probability p_inter the stem comes from a global pool shared by all users,
// otherwise it is private. With probability p_intra the user repeats one of
// its own earlier (stem, L) choices from that pool; otherwise it takes a
// global stem it has never used, or a fresh private one.
std::vector<Request> generate_workload(const WorkloadSpec& spec,
                                       RequestId first_id = 0);

// Probing attack: the attacker issues pre . v_i . suffix for every
// candidate v_i, one block each.
struct ProbeSpec {
  std::vector<TokenId> pre;
  std::vector<std::vector<TokenId>> candidates;
  std::vector<TokenId> suffix;
  // 1-based position of the victim's secret within candidates
  size_t correct_index = 1;
  UserId attacker_id = 1;
  UserId victim_id = 0;

  const std::vector<TokenId>& secret() const {
    return candidates.at(correct_index - 1);
  }
};

// Throws std::invalid_argument naming the offending field.
void validate(const ProbeSpec& probe, size_t block_size);

struct ProbeParams {
  size_t pre_blocks = 4;
  size_t suffix_blocks = 4;
  size_t num_candidates = 20;
  size_t correct_index = 9;
  UserId attacker_id = 1;
  UserId victim_id = 0;
  size_t vocabulary_size = 32000;
  size_t block_size = 16;
  uint64_t seed = 7;
};

// Random public template with distinct random candidate blocks.
ProbeSpec make_probe_spec(const ProbeParams& params);

// pre . secret . suffix, issued by the victim.
Request victim_request(const ProbeSpec& probe, RequestId id, double arrival_ms);

// Request i (1-based) arrives at start_ms + i * gap_ms.
std::vector<Request> generate_attack_sequence(const ProbeSpec& probe,
                                              double start_ms,
                                              double gap_ms,
                                              RequestId first_id = 0);

// Hit/miss timing workload: the first request sends a fixed prompt P; each
// later one resends P with probability hit_probability, otherwise sends a
// fresh prompt of the same length. Users rotate over `users`.
struct TimingSpec {
  size_t prompt_tokens = 500;
  size_t requests = 400;
  double arrival_rps = 1.0;
  double hit_probability = 0.5;
  size_t users = 8;
  size_t vocabulary_size = 32000;
  uint64_t seed = 11;
  uint64_t arrival_seed = 12;
};

std::vector<Request> generate_timing_workload(const TimingSpec& spec);

// One JSON object per line: id, user, arrival_ms, tokens.
void write_requests_jsonl(std::ostream& out, const std::vector<Request>& reqs);
// Throws std::runtime_error with the line number on malformed input.
std::vector<Request> read_requests_jsonl(std::istream& in);

}  // namespace apcsim
