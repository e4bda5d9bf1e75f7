#include "apcsim/activator.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace apcsim {
namespace {

constexpr double kMinBandwidth = 1e-9;
// kernel support, in bandwidths
constexpr double kKernelCutoff = 5.0;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// Gaussian KDE of `samples` on the grid lo + j * step, j in [0, out.size()).
void binned_density(std::span<const double> samples,
                    double bandwidth,
                    double lo,
                    double step,
                    std::vector<double>& out) {
  const size_t g = out.size();
  std::vector<double> bins(g, 0.0);
  for (const double x : samples) {
    const double pos = (x - lo) / step;
    size_t j = static_cast<size_t>(std::clamp(std::floor(pos), 0.0,
                                              static_cast<double>(g - 2)));
    const double frac = std::clamp(pos - static_cast<double>(j), 0.0, 1.0);
    bins[j] += 1.0 - frac;
    bins[j + 1] += frac;
  }

  const size_t half = std::clamp<size_t>(
      static_cast<size_t>(std::ceil(kKernelCutoff * bandwidth / step)), 1,
      g - 1);
  std::vector<double> kernel(half + 1);
  double mass = 0.0;
  for (size_t m = 0; m <= half; ++m) {
    const double z = static_cast<double>(m) * step / bandwidth;
    kernel[m] = std::exp(-0.5 * z * z);
    mass += m == 0 ? kernel[m] : 2.0 * kernel[m];
  }
  // each sample contributes unit mass on the grid
  const double scale =
      1.0 / (mass * step * static_cast<double>(samples.size()));
  for (double& w : kernel) {
    w *= scale;
  }

  std::fill(out.begin(), out.end(), 0.0);
  for (size_t i = 0; i < g; ++i) {
    const double b = bins[i];
    if (b == 0.0) {
      continue;
    }
    const size_t from = i >= half ? i - half : 0;
    const size_t to = std::min(g - 1, i + half);
    for (size_t j = from; j <= to; ++j) {
      out[j] += b * kernel[j > i ? j - i : i - j];
    }
  }
}

}  // namespace

void validate(const ActivatorConfig& cfg) {
  if (!(cfg.theta >= 0.0 && cfg.theta <= 1.0)) {
    throw std::invalid_argument("activator.theta must lie in [0, 1]");
  }
  if (cfg.window_len < 2) {
    throw std::invalid_argument("activator.window_len must be >= 2");
  }
  if (cfg.min_samples < 2 || cfg.min_samples > cfg.window_len) {
    throw std::invalid_argument(
        "activator.min_samples must lie in [2, window_len]");
  }
  if (!(cfg.hit_fraction_lo >= 0.0 && cfg.hit_fraction_hi <= 1.0 &&
        cfg.hit_fraction_lo < cfg.hit_fraction_hi)) {
    throw std::invalid_argument(
        "activator.hit_fraction_lo/hi must satisfy 0 <= lo < hi <= 1");
  }
  if (cfg.grid_points < 3) {
    throw std::invalid_argument("activator.grid_points must be >= 3");
  }
}

const char* to_string(SampleClass c) {
  switch (c) {
    case SampleClass::kHit:
      return "hit";
    case SampleClass::kMiss:
      return "miss";
    case SampleClass::kExcluded:
      return "excluded";
  }
  return "?";
}

void ActivatorWindow::push(SampleClass klass, double per_token_ttft_ms) {
  std::deque<double>* target = nullptr;
  if (klass == SampleClass::kHit) {
    target = &hits_;
  } else if (klass == SampleClass::kMiss) {
    target = &misses_;
  } else {
    return;
  }
  target->push_back(per_token_ttft_ms);
  while (target->size() > window_len_) {
    target->pop_front();
  }
  ++version_;
}

SampleClass classify_and_record(ActivatorWindow& window,
                                double ttft_ms,
                                size_t prompt_tokens,
                                double reuse_fraction,
                                const ActivatorConfig& cfg) {
  if (prompt_tokens == 0) {
    throw std::invalid_argument("classify_and_record: prompt_tokens == 0");
  }
  SampleClass klass = SampleClass::kExcluded;
  if (reuse_fraction >= cfg.hit_fraction_hi) {
    klass = SampleClass::kHit;
  } else if (reuse_fraction <= cfg.hit_fraction_lo) {
    klass = SampleClass::kMiss;
  }
  window.push(klass, ttft_ms / static_cast<double>(prompt_tokens));
  return klass;
}

double silverman_bandwidth(std::span<const double> samples) {
  const size_t n = samples.size();
  if (n < 2) {
    return kMinBandwidth;
  }
  const double mean =
      std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (const double x : samples) {
    ss += (x - mean) * (x - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr =
      (quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25)) / 1.34;

  double spread = std::min(sd, iqr);
  if (spread <= 0.0) {
    spread = std::max(sd, iqr);
  }
  const double h =
      0.9 * spread * std::pow(static_cast<double>(n), -0.2);
  return std::max(h, kMinBandwidth);
}

std::optional<double> kde_overlap(std::span<const double> a,
                                  std::span<const double> b,
                                  size_t grid_points) {
  if (a.size() < 2 || b.size() < 2) {
    return std::nullopt;
  }
  const double ha = silverman_bandwidth(a);
  const double hb = silverman_bandwidth(b);
  const double h_max = std::max(ha, hb);
  const auto [amin, amax] = std::minmax_element(a.begin(), a.end());
  const auto [bmin, bmax] = std::minmax_element(b.begin(), b.end());
  const double lo = std::min(*amin, *bmin) - 3.0 * h_max;
  const double hi = std::max(*amax, *bmax) + 3.0 * h_max;
  if (!(hi > lo)) {
    return 1.0;
  }
  const double step = (hi - lo) / static_cast<double>(grid_points - 1);
  if (!(step > 0.0)) {
    return 1.0;
  }

  std::vector<double> fa(grid_points);
  std::vector<double> fb(grid_points);
  binned_density(a, ha, lo, step, fa);
  binned_density(b, hb, lo, step, fb);

  double sum = 0.0;
  for (size_t j = 0; j < grid_points; ++j) {
    const double m = std::min(fa[j], fb[j]);
    sum += (j == 0 || j + 1 == grid_points) ? 0.5 * m : m;
  }
  return std::clamp(sum * step, 0.0, 1.0);
}

ActivationState isolation_active(const ActivatorWindow& window,
                                 const ActivatorConfig& cfg) {
  ActivationState state;
  const auto& hits = window.hit_samples();
  const auto& misses = window.miss_samples();
  if (hits.size() >= cfg.min_samples && misses.size() >= cfg.min_samples) {
    const std::vector<double> h(hits.begin(), hits.end());
    const std::vector<double> m(misses.begin(), misses.end());
    state.overlap = kde_overlap(h, m, cfg.grid_points);
  }
  if (cfg.theta <= 0.0) {
    state.active = false;
  } else if (!state.overlap) {
    state.active = true;
  } else {
    state.active = *state.overlap < cfg.theta;
  }
  return state;
}

Activator::Activator(ActivatorConfig cfg)
    : cfg_(cfg), window_(cfg.window_len) {
  validate(cfg_);
}

SampleClass Activator::record(double ttft_ms,
                              size_t prompt_tokens,
                              double reuse_fraction) {
  return classify_and_record(window_, ttft_ms, prompt_tokens, reuse_fraction,
                             cfg_);
}

ActivationState Activator::evaluate() {
  if (cached_version_ != window_.version()) {
    cached_ = isolation_active(window_, cfg_);
    cached_version_ = window_.version();
  }
  return cached_;
}

}  // namespace apcsim
