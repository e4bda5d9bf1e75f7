#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>

namespace apcsim {

struct ActivatorConfig {
  // isolation stays enforced while the hit/miss overlap is below theta
  double theta = 0.5;
  size_t window_len = 256;
  size_t min_samples = 16;
  double hit_fraction_hi = 0.8;
  double hit_fraction_lo = 0.2;
  size_t grid_points = 512;
};

// Throws std::invalid_argument naming the offending field.
void validate(const ActivatorConfig& cfg);

enum class SampleClass { kHit, kMiss, kExcluded };

const char* to_string(SampleClass c);

// Sliding window of per-token TTFT samples. Holds no user identities: the
// activation decision only ever sees aggregate measurements.
class ActivatorWindow {
 public:
  explicit ActivatorWindow(size_t window_len) : window_len_(window_len) {}

  void push(SampleClass klass, double per_token_ttft_ms);

  const std::deque<double>& hit_samples() const { return hits_; }
  const std::deque<double>& miss_samples() const { return misses_; }
  size_t window_len() const { return window_len_; }
  // bumped on every recorded sample
  uint64_t version() const { return version_; }

 private:
  size_t window_len_;
  std::deque<double> hits_;
  std::deque<double> misses_;
  uint64_t version_ = 0;
};

// Classifies a completed request by its reuse fraction and records its
// per-token TTFT. Excluded samples leave the window untouched.
SampleClass classify_and_record(ActivatorWindow& window,
                                double ttft_ms,
                                size_t prompt_tokens,
                                double reuse_fraction,
                                const ActivatorConfig& cfg);

// Silverman's rule, 0.9 * min(sd, IQR/1.34) * n^(-1/5). When one of the two
// spread measures is zero the other is used; the result is floored at 1e-9.
double silverman_bandwidth(std::span<const double> samples);

// Integral of min(f, g) for Gaussian KDEs of the two sample sets, clamped to
// [0, 1]. nullopt when either set has fewer than two samples.
//
// Densities are estimated on a uniform grid spanning
// [min - 3 h_max, max + 3 h_max] by linear binning followed by convolution
// with the discretized (unit-mass) kernel, then integrated with the
// trapezoidal rule.
std::optional<double> kde_overlap(std::span<const double> a,
                                  std::span<const double> b,
                                  size_t grid_points = 512);

struct ActivationState {
  bool active = true;
  // nullopt when either class lacks min_samples
  std::optional<double> overlap;
};

// Fail-safe: isolation stays on until both classes hold min_samples, except
// for theta == 0, where no measurement could ever enable it.
ActivationState isolation_active(const ActivatorWindow& window,
                                 const ActivatorConfig& cfg);

// Window plus a memo of the last evaluation, keyed on the window version.
class Activator {
 public:
  explicit Activator(ActivatorConfig cfg);

  SampleClass record(double ttft_ms, size_t prompt_tokens, double reuse_fraction);
  ActivationState evaluate();

  const ActivatorWindow& window() const { return window_; }
  const ActivatorConfig& config() const { return cfg_; }

 private:
  ActivatorConfig cfg_;
  ActivatorWindow window_;
  std::optional<uint64_t> cached_version_;
  ActivationState cached_;
};

}  // namespace apcsim
