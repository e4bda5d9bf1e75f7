#include "apcsim/workload.h"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "apcsim/random.h"

namespace apcsim {
namespace {

std::vector<TokenId> random_tokens(Rng& rng, size_t n, size_t vocab) {
  std::vector<TokenId> out(n);
  for (TokenId& t : out) {
    t = static_cast<TokenId>(uniform_index(rng, vocab));
  }
  return out;
}

struct StemChoice {
  // index into the global pool, or into the user's private stems
  size_t stem = 0;
  bool global = false;
  size_t length_blocks = 0;
};

size_t secret_slot(SecretPosition pos, size_t length_blocks) {
  switch (pos) {
    case SecretPosition::kHead:
      return 0;
    case SecretPosition::kMiddle:
      return length_blocks / 2;
    case SecretPosition::kTail:
      return length_blocks;
  }
  return 0;
}

// Poisson arrival times (ms) for n requests.
std::vector<double> poisson_arrivals(Rng& rng, size_t n, double rps) {
  std::vector<double> times(n);
  double t = 0.0;
  for (double& at : times) {
    t += exponential(rng, 1000.0 / rps);
    at = t;
  }
  return times;
}

}  // namespace

double reuse_probability(ReuseLevel level) {
  switch (level) {
    case ReuseLevel::kZero:
      return 0.0;
    case ReuseLevel::kLow:
      return 0.2;
    case ReuseLevel::kModerate:
      return 0.5;
    case ReuseLevel::kHigh:
      return 0.9;
  }
  return 0.0;
}

const char* to_string(ReuseLevel level) {
  switch (level) {
    case ReuseLevel::kZero:
      return "zero";
    case ReuseLevel::kLow:
      return "low";
    case ReuseLevel::kModerate:
      return "moderate";
    case ReuseLevel::kHigh:
      return "high";
  }
  return "?";
}

const char* to_string(SecretPosition pos) {
  switch (pos) {
    case SecretPosition::kHead:
      return "head";
    case SecretPosition::kMiddle:
      return "middle";
    case SecretPosition::kTail:
      return "tail";
  }
  return "?";
}

std::optional<ReuseLevel> parse_reuse_level(const std::string& s) {
  for (ReuseLevel l : {ReuseLevel::kZero, ReuseLevel::kLow,
                       ReuseLevel::kModerate, ReuseLevel::kHigh}) {
    if (s == to_string(l)) {
      return l;
    }
  }
  return std::nullopt;
}

std::optional<SecretPosition> parse_secret_position(const std::string& s) {
  for (SecretPosition p : {SecretPosition::kHead, SecretPosition::kMiddle,
                           SecretPosition::kTail}) {
    if (s == to_string(p)) {
      return p;
    }
  }
  return std::nullopt;
}

void validate(const WorkloadSpec& spec) {
  auto require = [](bool ok, const char* field) {
    if (!ok) {
      throw std::invalid_argument(std::string("workload.") + field +
                                  " is out of range");
    }
  };
  require(spec.users >= 1, "users");
  require(spec.requests_per_user >= 1, "requests_per_user");
  require(spec.arrival_rps > 0.0, "arrival_rps");
  require(spec.prompt_blocks >= 1, "prompt_blocks");
  require(spec.vocabulary_size >= 2, "vocabulary_size");
  require(spec.block_size >= 1, "block_size");
}

WorkloadSpec preset_workload(int number) {
  WorkloadSpec spec;
  switch (number) {
    case 1:
      spec.intra_reuse = ReuseLevel::kHigh;
      spec.inter_reuse = ReuseLevel::kZero;
      break;
    case 2:
      spec.intra_reuse = ReuseLevel::kHigh;
      spec.inter_reuse = ReuseLevel::kModerate;
      break;
    case 3:
      spec.intra_reuse = ReuseLevel::kModerate;
      spec.inter_reuse = ReuseLevel::kModerate;
      break;
    case 4:
      spec.intra_reuse = ReuseLevel::kHigh;
      spec.inter_reuse = ReuseLevel::kHigh;
      break;
    case 5:
      spec.intra_reuse = ReuseLevel::kZero;
      spec.inter_reuse = ReuseLevel::kHigh;
      break;
    default:
      throw std::invalid_argument("workload preset must be 1..5");
  }
  return spec;
}

std::vector<Request> generate_workload(const WorkloadSpec& spec,
                                       RequestId first_id) {
  validate(spec);
  Rng rng(spec.seed);
  const size_t stem_tokens = spec.prompt_blocks * spec.block_size;
  const size_t min_len = (spec.prompt_blocks + 1) / 2;

  auto draw_length = [&] {
    return min_len + uniform_index(rng, spec.prompt_blocks - min_len + 1);
  };

  // One global stem per request slot, so no user ever runs out of unused ones.
  // A stem is a fixed document: its length is drawn once, so every user
  // splices the secret at the same depth.
  std::vector<std::vector<TokenId>> global_stems;
  std::vector<size_t> global_lengths;
  global_stems.reserve(spec.requests_per_user);
  for (size_t i = 0; i < spec.requests_per_user; ++i) {
    global_stems.push_back(random_tokens(rng, stem_tokens, spec.vocabulary_size));
    global_lengths.push_back(draw_length());
  }

  const double p_intra = reuse_probability(spec.intra_reuse);
  const double p_inter = reuse_probability(spec.inter_reuse);

  std::vector<std::vector<std::vector<TokenId>>> per_user(spec.users);
  for (size_t u = 0; u < spec.users; ++u) {
    const std::vector<TokenId> secret =
        random_tokens(rng, spec.block_size, spec.vocabulary_size);
    std::vector<std::vector<TokenId>> private_stems;
    std::vector<StemChoice> history_global;
    std::vector<StemChoice> history_private;
    std::vector<size_t> unused_global(global_stems.size());
    for (size_t i = 0; i < unused_global.size(); ++i) {
      unused_global[i] = i;
    }

    for (size_t r = 0; r < spec.requests_per_user; ++r) {
      const bool global = bernoulli(rng, p_inter);
      const bool repeat = bernoulli(rng, p_intra);
      auto& history = global ? history_global : history_private;

      StemChoice choice;
      if (repeat && !history.empty()) {
        choice = history[uniform_index(rng, history.size())];
      } else {
        if (global && !unused_global.empty()) {
          const size_t pick = uniform_index(rng, unused_global.size());
          choice.stem = unused_global[pick];
          choice.global = true;
          choice.length_blocks = global_lengths[choice.stem];
          unused_global.erase(unused_global.begin() +
                              static_cast<std::ptrdiff_t>(pick));
          history_global.push_back(choice);
        } else {
          private_stems.push_back(
              random_tokens(rng, stem_tokens, spec.vocabulary_size));
          choice.stem = private_stems.size() - 1;
          choice.global = false;
          choice.length_blocks = draw_length();
          history_private.push_back(choice);
        }
      }

      const std::vector<TokenId>& stem =
          choice.global ? global_stems[choice.stem] : private_stems[choice.stem];
      const size_t slot = secret_slot(spec.secret_position, choice.length_blocks);
      std::vector<TokenId> prompt;
      prompt.reserve((choice.length_blocks + 3) * spec.block_size);
      prompt.insert(prompt.end(), stem.begin(),
                    stem.begin() + static_cast<std::ptrdiff_t>(slot * spec.block_size));
      prompt.insert(prompt.end(), secret.begin(), secret.end());
      prompt.insert(prompt.end(),
                    stem.begin() + static_cast<std::ptrdiff_t>(slot * spec.block_size),
                    stem.begin() + static_cast<std::ptrdiff_t>(
                                       choice.length_blocks * spec.block_size));
      const size_t question_len = 8 + uniform_index(rng, 25);
      const std::vector<TokenId> question =
          random_tokens(rng, question_len, spec.vocabulary_size);
      prompt.insert(prompt.end(), question.begin(), question.end());
      per_user[u].push_back(std::move(prompt));
    }
  }

  // Interleave users uniformly at random (weighted by remaining requests)
  // onto one Poisson arrival stream.
  Rng arrivals(spec.arrival_seed);
  const size_t total = spec.users * spec.requests_per_user;
  const std::vector<double> times =
      poisson_arrivals(arrivals, total, spec.arrival_rps);
  std::vector<size_t> next(spec.users, 0);
  size_t remaining = total;
  std::vector<Request> out;
  out.reserve(total);
  for (size_t i = 0; i < total; ++i) {
    uint64_t pick = uniform_index(arrivals, remaining);
    size_t u = 0;
    for (; u < spec.users; ++u) {
      const size_t left = spec.requests_per_user - next[u];
      if (pick < left) {
        break;
      }
      pick -= left;
    }
    out.push_back(Request{.id = first_id + i,
                          .user = u,
                          .arrival_ms = times[i],
                          .tokens = std::move(per_user[u][next[u]])});
    ++next[u];
    --remaining;
  }
  return out;
}

void validate(const ProbeSpec& probe, size_t block_size) {
  auto fail = [](const char* field, const char* why) {
    throw std::invalid_argument(std::string("attack.") + field + ": " + why);
  };
  if (probe.pre.empty() || probe.pre.size() % block_size != 0) {
    fail("pre", "must be a non-empty whole number of blocks");
  }
  if (probe.candidates.empty()) {
    fail("candidates", "must be non-empty");
  }
  for (const auto& c : probe.candidates) {
    if (c.size() != block_size) {
      fail("candidates", "each candidate must be exactly one block");
    }
  }
  if (probe.correct_index < 1 || probe.correct_index > probe.candidates.size()) {
    fail("correct_index", "must lie in [1, number of candidates]");
  }
  const auto& secret = probe.secret();
  for (size_t i = 0; i < probe.candidates.size(); ++i) {
    if (i + 1 != probe.correct_index && probe.candidates[i] == secret) {
      fail("candidates", "exactly one candidate may equal the secret");
    }
  }
  if (probe.attacker_id == probe.victim_id) {
    fail("attacker_id", "must differ from victim_id");
  }
}

ProbeSpec make_probe_spec(const ProbeParams& params) {
  Rng rng(params.seed);
  ProbeSpec probe;
  probe.pre = random_tokens(rng, params.pre_blocks * params.block_size,
                            params.vocabulary_size);
  std::set<std::vector<TokenId>> seen;
  while (probe.candidates.size() < params.num_candidates) {
    auto c = random_tokens(rng, params.block_size, params.vocabulary_size);
    if (seen.insert(c).second) {
      probe.candidates.push_back(std::move(c));
    }
  }
  probe.suffix = random_tokens(rng, params.suffix_blocks * params.block_size,
                               params.vocabulary_size);
  probe.correct_index = params.correct_index;
  probe.attacker_id = params.attacker_id;
  probe.victim_id = params.victim_id;
  validate(probe, params.block_size);
  return probe;
}

namespace {

std::vector<TokenId> probe_prompt(const ProbeSpec& probe,
                                  const std::vector<TokenId>& candidate) {
  std::vector<TokenId> tokens = probe.pre;
  tokens.insert(tokens.end(), candidate.begin(), candidate.end());
  tokens.insert(tokens.end(), probe.suffix.begin(), probe.suffix.end());
  return tokens;
}

}  // namespace

Request victim_request(const ProbeSpec& probe, RequestId id, double arrival_ms) {
  return Request{.id = id,
                 .user = probe.victim_id,
                 .arrival_ms = arrival_ms,
                 .tokens = probe_prompt(probe, probe.secret())};
}

std::vector<Request> generate_attack_sequence(const ProbeSpec& probe,
                                              double start_ms,
                                              double gap_ms,
                                              RequestId first_id) {
  std::vector<Request> out;
  out.reserve(probe.candidates.size());
  for (size_t i = 0; i < probe.candidates.size(); ++i) {
    out.push_back(Request{
        .id = first_id + i,
        .user = probe.attacker_id,
        .arrival_ms = start_ms + static_cast<double>(i + 1) * gap_ms,
        .tokens = probe_prompt(probe, probe.candidates[i])});
  }
  return out;
}

std::vector<Request> generate_timing_workload(const TimingSpec& spec) {
  if (spec.prompt_tokens == 0 || spec.requests == 0 || spec.users == 0 ||
      !(spec.arrival_rps > 0.0)) {
    throw std::invalid_argument("timing workload: empty or invalid spec");
  }
  Rng rng(spec.seed);
  Rng arrivals(spec.arrival_seed);
  const std::vector<TokenId> shared =
      random_tokens(rng, spec.prompt_tokens, spec.vocabulary_size);
  const std::vector<double> times =
      poisson_arrivals(arrivals, spec.requests, spec.arrival_rps);
  std::vector<Request> out;
  out.reserve(spec.requests);
  for (size_t i = 0; i < spec.requests; ++i) {
    const bool hit = i == 0 || bernoulli(rng, spec.hit_probability);
    out.push_back(Request{
        .id = i,
        .user = i % spec.users,
        .arrival_ms = times[i],
        .tokens = hit ? shared
                      : random_tokens(rng, spec.prompt_tokens,
                                      spec.vocabulary_size)});
  }
  return out;
}

void write_requests_jsonl(std::ostream& out, const std::vector<Request>& reqs) {
  for (const Request& r : reqs) {
    nlohmann::json j = {{"id", r.id},
                        {"user", r.user},
                        {"arrival_ms", r.arrival_ms},
                        {"tokens", r.tokens}};
    out << j.dump() << '\n';
  }
}

std::vector<Request> read_requests_jsonl(std::istream& in) {
  std::vector<Request> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      out.push_back(Request{.id = j.at("id").get<RequestId>(),
                            .user = j.at("user").get<UserId>(),
                            .arrival_ms = j.at("arrival_ms").get<double>(),
                            .tokens = j.at("tokens").get<std::vector<TokenId>>()});
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("requests line " + std::to_string(lineno) +
                               ": " + e.what());
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Request& a, const Request& b) {
    return a.arrival_ms < b.arrival_ms;
  });
  return out;
}

}  // namespace apcsim
