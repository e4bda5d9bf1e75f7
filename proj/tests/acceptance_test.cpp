// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "apcsim/experiments.h"
#include "apcsim/metrics.h"
#include "apcsim/scenario.h"
#include "support/kde_oracle.h"
#include "support/security_enumeration.h"

using namespace apcsim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::vector<size_t> reused_per_request(const ScenarioResult& r) {
  std::vector<size_t> v;
  for (const RequestOutcome& o : r.outcomes) {
    v.push_back(o.reused_blocks);
  }
  return v;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// AC1
void security_suite(Verdict& v) {
  const enumeration::Report rep = enumeration::enumerate_all();
  v.detail << "scenarios=" << rep.scenarios << " enforced_probes=" << rep.enforced_probes
           << " seconds=" << rep.seconds;
  v.require(!rep.leaked, "leak " + rep.first_leak);
  v.require(rep.scenarios > 100000, "enumeration too small");
  v.require(rep.seconds < 60.0, "runtime >= 60 s");
  v.require(enumeration::witness_empty_pre(), "empty-pre witness");
  v.require(enumeration::witness_first_attempt_guess(), "first-guess witness");
  v.require(enumeration::metadata_written_while_deactivated(),
            "metadata update while deactivated");
}

// AC2
void attack_replay(Verdict& v) {
  const ScenarioConfig c = attack_scenario(9);
  const AttackReport rep = run_attack(c);
  v.require(rep.runs.size() == 2, "two runs");
  if (rep.runs.size() != 2) {
    return;
  }
  const AttackRun& pc = rep.runs[0];
  const AttackRun& si = rep.runs[1];
  v.require(pc.policy == PolicyKind::kPrefixCaching, "first run is prefix caching");
  v.require(pc.probes.size() == 20 && si.probes.size() == 20, "20 probes");
  v.require(pc.spike_index == std::optional<size_t>(9), "prefix caching spikes at 9");
  size_t full = 0;
  for (const ProbeObservation& p : pc.probes) {
    full += p.reuse_fraction == 1.0;
  }
  v.require(full == 1 && pc.probes[8].reuse_fraction == 1.0,
            "one full hit, at the correct index");
  // independent dip check: more than 3 sample sd below the others' mean
  double mean = 0.0;
  double ss = 0.0;
  std::vector<double> others;
  for (const ProbeObservation& p : pc.probes) {
    if (p.index != 9) {
      others.push_back(p.ttft_ms);
    }
  }
  for (double t : others) {
    mean += t / static_cast<double>(others.size());
  }
  for (double t : others) {
    ss += (t - mean) * (t - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(others.size() - 1));
  const double dip = (mean - pc.probes[8].ttft_ms) / sd;
  v.require(dip > 3.0, "ttft dip > 3 sd");
  v.require(!si.spike_index.has_value(), "selective isolation has no spike");
  bool same = true;
  for (const ProbeObservation& p : si.probes) {
    same = same && p.reuse_fraction == si.probes[0].reuse_fraction;
  }
  v.require(same, "identical reuse fraction across probes");
  v.detail << "pc_spike=" << pc.spike_index.value_or(0) << " dip_sd=" << dip
           << " si_reuse_fraction=" << si.probes[0].reuse_fraction;
}

// AC3
void workload_matrix(Verdict& v) {
  const auto start = std::chrono::steady_clock::now();
  const PolicyKind kinds[] = {PolicyKind::kUserIsolation, PolicyKind::kSelectiveIsolation,
                              PolicyKind::kPrefixCaching};
  for (int w = 1; w <= 5; ++w) {
    GroupSummary g[3];
    for (int k = 0; k < 3; ++k) {
      const ScenarioConfig c = workload_scenario(w, kinds[k]);
      v.require(c.workload->users == 10 && c.workload->requests_per_user == 100 &&
                    c.workload->arrival_rps == 1.0,
                "10 users x 100 requests at 1 rps");
      g[k] = compute_summary(run_scenario(c).outcomes, {}).all;
    }
    const double ui = g[0].hit_rate;
    const double si = g[1].hit_rate;
    const double pc = g[2].hit_rate;
    const std::string tag = "W" + std::to_string(w) + " ";
    v.detail << tag << "ui=" << ui << " si=" << si << " pc=" << pc << "; ";
    v.require(ui <= si && si <= pc + 0.01, tag + "hit-rate dominance");
    // reversed latency ordering; 1% slack absorbs batching noise
    v.require(g[2].ttft.mean_ms <= g[1].ttft.mean_ms * 1.01 &&
                  g[1].ttft.mean_ms <= g[0].ttft.mean_ms * 1.01,
              tag + "ttft ordering");
    if (w == 1) {
      const double spread = std::max({ui, si, pc}) - std::min({ui, si, pc});
      v.require(spread <= 0.02, tag + "within 2 points");
    }
    if (w == 5) {
      v.require(ui == 0.0, tag + "isolation hit rate is 0");
      v.require(std::abs(pc - si) <= 0.05, tag + "within 5 points of prefix caching");
    }
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  v.detail << "seconds=" << secs;
  v.require(secs < 120.0, "runtime >= 2 min");
}

// AC4
void theta_sweep(Verdict& v) {
  const ScenarioConfig base = workload_scenario(4, PolicyKind::kSelectiveIsolation, "large");
  std::vector<double> thetas;
  for (int i = 0; i <= 10; ++i) {
    thetas.push_back(i / 10.0);
  }
  const std::vector<ThetaPoint> sweep = run_theta_sweep(base, thetas);

  ScenarioConfig pc = base;
  pc.policy.kind = PolicyKind::kPrefixCaching;
  ScenarioConfig always = base;
  always.policy.always_on = true;
  v.require(sweep.front().reused_blocks == reused_per_request(run_scenario(pc)),
            "theta 0 equals prefix caching per request");
  v.require(sweep.back().reused_blocks == reused_per_request(run_scenario(always)),
            "theta 1 equals always-on per request");
  double worst = 0.0;
  for (size_t i = 0; i < sweep.size(); ++i) {
    for (size_t j = i + 1; j < sweep.size(); ++j) {
      worst = std::max(worst, sweep[j].summary.hit_rate - sweep[i].summary.hit_rate);
    }
  }
  v.require(worst <= 0.01, "non-increasing within 1 point");
  v.detail << "hit(0)=" << sweep.front().summary.hit_rate
           << " hit(1)=" << sweep.back().summary.hit_rate << " worst_rise=" << worst;
}

// AC5, AC6
HitMissMeasurement timing(const std::string& profile, size_t tokens, double rps) {
  return measure_hit_miss(run_scenario(timing_scenario(profile, tokens, rps)).outcomes);
}

void latency_gap(Verdict& v) {
  const std::vector<std::string> profiles = {"small", "mid", "large"};
  std::map<std::pair<std::string, size_t>, HitMissMeasurement> m;
  for (const auto& p : profiles) {
    for (size_t t : {300, 500}) {
      m[{p, t}] = timing(p, t, 1.0);
    }
  }
  auto gap = [&](const std::string& p, size_t t) {
    const auto& x = m.at({p, t});
    return x.miss_ttft_mean_ms - x.hit_ttft_mean_ms;
  };
  for (size_t t : {300, 500}) {
    v.require(gap("small", t) < gap("mid", t) && gap("mid", t) < gap("large", t),
              "gap increases with per-token cost at " + std::to_string(t));
  }
  for (const auto& p : profiles) {
    v.require(gap(p, 300) < gap(p, 500), "gap increases with length for " + p);
    v.detail << p << " gap300=" << gap(p, 300) << " gap500=" << gap(p, 500) << "; ";
  }
  const auto small = m.at({"small", 500}).overlap;
  const auto large = m.at({"large", 500}).overlap;
  v.require(small && *small >= 0.8, "small overlap >= 0.8");
  v.require(large && *large <= 0.2, "large overlap <= 0.2");
  v.detail << "overlap small=" << small.value_or(-1) << " large=" << large.value_or(-1);
}

void saturation(Verdict& v) {
  const auto calm = timing("large", 500, 1.0).overlap;
  const auto busy = timing("large", 500, 200.0).overlap;
  v.require(calm && busy, "both overlaps measurable");
  if (calm && busy) {
    v.require(*busy >= *calm + 0.1, "saturated overlap exceeds 1 rps by 0.1");
    v.detail << "overlap 1rps=" << *calm << " 200rps=" << *busy;
  }
}

// AC7
void kde_checks(Verdict& v) {
  std::mt19937_64 rng(1);
  const auto a = oracle::normal_sample(rng, 200, 0.05, 0.01);
  const double same = *kde_overlap(a, a);
  const auto far = oracle::normal_sample(rng, 200, 100.0, 0.01);
  const double disjoint = *kde_overlap(a, far);
  v.require(same >= 0.99, "identical >= 0.99");
  v.require(disjoint <= 0.01, "disjoint <= 0.01");
  double worst = 0.0;
  double asym = 0.0;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const auto [x, y] = oracle::oracle_pair(seed);
    worst = std::max(worst, std::abs(*kde_overlap(x, y) - oracle::oracle_overlap(x, y)));
    asym = std::max(asym, std::abs(*kde_overlap(x, y) - *kde_overlap(y, x)));
  }
  v.require(worst <= 0.03, "fine-grid oracle within 0.03");
  v.require(asym <= 1e-12, "symmetric within 1e-12");
  v.detail << "identical=" << same << " disjoint=" << disjoint << " oracle_err=" << worst
           << " asym=" << asym;
}

// AC8
// summary fields recomputed straight from the outcome rows
json recompute_group(const std::vector<json>& rows) {
  uint64_t reused = 0;
  uint64_t total = 0;
  double sum = 0.0;
  std::vector<double> t;
  for (const json& r : rows) {
    reused += r["reused_blocks"].get<uint64_t>();
    total += r["total_blocks"].get<uint64_t>();
    sum += r["ttft_ms"].get<double>();
    t.push_back(r["ttft_ms"].get<double>());
  }
  std::sort(t.begin(), t.end());
  auto rank = [&](size_t pct) {
    const size_t k = (pct * t.size() + 99) / 100;
    return t[std::max<size_t>(k, 1) - 1];
  };
  return {{"requests", rows.size()},
          {"reused_blocks", reused},
          {"total_blocks", total},
          {"hit_rate", total == 0 ? 0.0 : static_cast<double>(reused) / total},
          {"ttft_mean_ms", sum / static_cast<double>(rows.size())},
          {"ttft_p50_ms", rank(50)},
          {"ttft_p99_ms", rank(99)}};
}

bool group_matches(const json& want, const json& got) {
  for (const auto& [k, val] : want.items()) {
    if (!got.contains(k) || got[k] != val) {
      return false;
    }
  }
  return true;
}

void determinism(Verdict& v, const fs::path& scratch) {
  for (const std::string& name : preset_names()) {
    const auto a = run_preset(name, scratch / "a" / name);
    const auto b = run_preset(name, scratch / "b" / name);
    bool same = a.size() == b.size();
    for (size_t i = 0; same && i < a.size(); ++i) {
      same = read_file(a[i]) == read_file(b[i]) && !read_file(a[i]).empty();
    }
    v.require(same, name + " byte-identical");
  }

  ScenarioConfig c = workload_scenario(4, PolicyKind::kSelectiveIsolation);
  c.exclude_users = {3};
  c.dump_cache = true;
  const auto da = scratch / "run_a";
  const auto db = scratch / "run_b";
  const auto fa = write_outputs(c, run_scenario(c), da);
  write_outputs(c, run_scenario(c), db);
  size_t compared = 0;
  for (const fs::path& p : fa) {
    // wall-clock timings are the only non-deterministic output
    if (p.filename() == "overhead.json") {
      continue;
    }
    v.require(read_file(p) == read_file(db / p.filename()),
              p.filename().string() + " byte-identical");
    ++compared;
  }

  std::vector<json> rows;
  std::map<uint64_t, std::vector<json>> by_user;
  std::vector<json> kept;
  std::ifstream in(da / "outcomes.jsonl");
  for (std::string line; std::getline(in, line);) {
    json r = json::parse(line);
    by_user[r["user"].get<uint64_t>()].push_back(r);
    if (r["user"].get<uint64_t>() != 3) {
      kept.push_back(r);
    }
    rows.push_back(std::move(r));
  }
  const json summary = json::parse(read_file(da / "summary.json"));
  bool ok = group_matches(recompute_group(rows), summary) &&
            group_matches(recompute_group(kept), summary["excluding_users"]) &&
            summary["per_user"].size() == by_user.size();
  for (const json& u : summary["per_user"]) {
    ok = ok && group_matches(recompute_group(by_user[u["user"].get<uint64_t>()]), u);
  }
  v.require(ok, "summary recomputed from outcomes");
  v.detail << "presets=" << preset_names().size() << " run_files=" << compared
           << " outcome_rows=" << rows.size();
}

// AC9
void overhead(Verdict& v) {
  const ScenarioResult r = run_scenario(workload_scenario(4, PolicyKind::kSelectiveIsolation));
  const OverheadStats d = overhead_stats(r.overhead.detector_us);
  const OverheadStats a = overhead_stats(r.overhead.activator_us);
  v.require(d.count == r.outcomes.size() && a.count == r.outcomes.size(),
            "one timing per request");
  v.require(d.median_us < 100.0, "detector median < 100 us");
  v.require(a.median_us < 100.0, "activator median < 100 us");
  v.require(sizeof(EntryMetadata) == 2 * sizeof(uint64_t), "metadata is two words");
  const json report = overhead_json(r);
  v.require(report["metadata_words_per_entry"] == 2, "metadata reported as two words");
  v.detail << "detector_median_us=" << d.median_us << " activator_median_us=" << a.median_us
           << " metadata_bytes=" << sizeof(EntryMetadata);
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path scratch =
      argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "apcsim_acceptance";
  fs::remove_all(scratch);

  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
      {"AC1 security guarantee enumeration", security_suite},
      {"AC2 probing attack replay", attack_replay},
      {"AC3 workload matrix orderings", workload_matrix},
      {"AC4 theta sweep", theta_sweep},
      {"AC5 hit/miss gap grows with cost and length", latency_gap},
      {"AC6 overlap grows under saturation", saturation},
      {"AC7 kde correctness", kde_checks},
      {"AC8 determinism and summary round trip",
       [&](Verdict& v) { determinism(v, scratch); }},
      {"AC9 overhead report", overhead},
  };

  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      check(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    failures += !v.pass;
    std::printf("%s: %s | %s\n", v.pass ? "PASS" : "FAIL", name.c_str(),
                v.detail.str().c_str());
    std::fflush(stdout);
  }
  fs::remove_all(scratch);
  return failures == 0 ? 0 : 1;
}
