#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "apcsim/random.h"
#include "apcsim/token_model.h"

namespace apcsim {

// Parametric prefill cost and batching discipline standing in for one
// model/hardware pairing.
struct ModelProfile {
  std::string name;
  double base_ms = 0.0;
  double per_token_ms = 0.0;
  double quad_ms_per_token2 = 0.0;
  double noise_sigma_ms = 0.0;  // lognormal sigma of the multiplicative jitter
  size_t batch_token_budget = 1;
  double step_overhead_ms = 0.0;
};

// Throws std::invalid_argument naming the offending field.
void validate(const ModelProfile& profile);

// "small", "mid" and "large".
const std::vector<ModelProfile>& builtin_profiles();
// nullptr when unknown
const ModelProfile* find_builtin_profile(const std::string& name);

// (base + a t + b t^2) * lognormal(0, sigma). Zero tokens still pay base_ms.
double prefill_cost(size_t recomputed_tokens,
                    const ModelProfile& profile,
                    Rng& rng);

struct Completion {
  RequestId id = 0;
  double arrival_ms = 0.0;
  double start_ms = 0.0;
  double finish_ms = 0.0;
  size_t batch_size = 0;

  double ttft_ms() const { return finish_ms - arrival_ms; }
};

// Single server fed FIFO. Batches are formed greedily from queued requests
// that have arrived by the batch start, up to batch_token_budget recomputed
// tokens; an oversized head request forms its own batch. All members of a
// batch finish together.
class ServiceQueue {
 public:
  void enqueue(RequestId id, size_t recomputed_tokens, double arrival_ms);

  // Starts every batch whose start time is strictly before `now` and returns
  // the members' completions in batch order. Pass +infinity to drain.
  std::vector<Completion> step_batches(double now,
                                       const ModelProfile& profile,
                                       Rng& rng);

  bool empty() const { return pending_.empty(); }
  size_t pending() const { return pending_.size(); }
  double busy_until() const { return busy_until_; }

 private:
  struct Pending {
    RequestId id;
    size_t tokens;
    double arrival_ms;
  };

  std::deque<Pending> pending_;
  double busy_until_ = 0.0;
};

}  // namespace apcsim
