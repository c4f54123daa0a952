// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run: eight criteria, one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "fixtures.hpp"
#include "oracles/enumerate.hpp"
#include "oracles/reference_simulator.hpp"
#include "soma/cli.hpp"

using namespace soma;
using soma::testing::tensor_id;
using soma::testing::tile_id;
using soma::testing::toy_hw;

namespace {

constexpr std::int64_t kHuge = std::int64_t{1} << 50;

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    failed_ += !ok;
    ++count_;
  }
  bool ok() const { return failed_ == 0; }
  std::string failures() const {
    std::string s;
    for (const auto& f : failures_) s += "\n    - " + f;
    return s;
  }
  std::int64_t count() const { return count_; }
  std::int64_t failed() const { return failed_; }

 private:
  std::vector<std::string> failures_;
  std::int64_t count_ = 0, failed_ = 0;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

// 1: the hand-scheduled toy5 plan, cycle for cycle against the oracle.
Outcome toy5_timeline() {
  const auto g = builtin_workload("toy5", 1);
  const auto plan = testing::toy5_hand_plan(g);
  const auto hw = toy_hw();
  const auto r = simulate(plan, hw, hw.gbuf_bytes);
  const auto ref = oracle::reference_timeline(plan, hw);
  Check c;
  c.expect(r.valid && !ref.deadlock, "plan valid");
  if (!c.ok()) return {false, c.failures()};
  int mismatches = 0;
  for (int t = 0; t < plan.tile_count(); ++t) {
    const auto& e = r.timeline[static_cast<std::size_t>(t)];
    mismatches += e.start != ref.tile_start[static_cast<std::size_t>(t)];
    mismatches += e.end != ref.tile_end[static_cast<std::size_t>(t)];
  }
  for (std::size_t k = 0; k < plan.tensor_count(); ++k) {
    const auto& e = r.timeline[static_cast<std::size_t>(plan.tile_count()) + k];
    mismatches += e.start != ref.dram_start[k];
    mismatches += e.end != ref.dram_end[k];
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " event boundaries differ from the oracle");
  c.expect(r.latency_cycles == ref.latency, "latency differs from the oracle");
  c.expect(r.latency_cycles == 158628, "latency matches frozen value 158628");
  auto ev = [&](const std::string& name) -> const TimelineEvent& {
    for (const auto& e : r.timeline) {
      if (e.name == name) return e;
    }
    throw std::out_of_range(name);
  };
  c.expect(ev("I_C2").start >= ev("W_D").end, "I_C2 begins after W_D completes");
  c.expect(ev("I_C2").start > ev("E1").start && ev("I_C2").start < ev("E1").end,
           "I_C2 begins while E1 computes");
  c.expect(ev("D1").start >= ev("O_E1").end, "D1 begins no earlier than O_E1 completes");
  return {c.ok(), "latency " + std::to_string(r.latency_cycles) + ", " +
                      std::to_string(plan.tile_count() + static_cast<int>(plan.tensor_count())) +
                      " events exact" + c.failures()};
}

// 2: latency never beats the lower bound. Plans are random walks that only
// keep DRAM moves whose result still runs to completion.
Outcome lower_bound_property() {
  Rng rng(2024);
  const auto hw = hardware_preset("edge");
  std::int64_t plans = 0, violations = 0, rejected = 0, moves = 0;
  const auto names = builtin_workload_names();
  while (plans < 1200) {
    for (const auto& name : names) {
      for (std::int64_t batch : {1, 4}) {
        const auto g = std::make_shared<const ModelGraph>(builtin_workload(name, batch));
        auto plan = double_buffer_dlsa(parse_lfa(g, testing::random_lfa(*g, rng, 16)));
        for (int i = 0; i < 24; ++i) {
          const auto kind = i % 2 ? DlsaMoveKind::order : DlsaMoveKind::duration;
          auto next = propose_dlsa_move(plan, kind, rng).plan;
          ++moves;
          if (simulate(next, hw, kHuge, {.record_timeline = false}).valid) plan = std::move(next);
          else ++rejected;
        }
        const auto r = simulate(plan, hw, kHuge, {.record_timeline = false});
        if (!r.valid) continue;
        ++plans;
        violations += r.latency_cycles < latency_lower_bound(plan, hw);
      }
    }
  }
  return {violations == 0, std::to_string(plans) + " valid plans, " + std::to_string(violations) +
                               " below the bound (" + std::to_string(rejected) + " of " +
                               std::to_string(moves) + " moves deadlocked)"};
}

ModelGraph conv_chain(int n, std::int64_t channels, std::int64_t extent) {
  std::vector<Layer> layers;
  for (int i = 0; i < n; ++i) {
    Layer l;
    l.id = i;
    l.name = std::string(1, static_cast<char>('A' + i));
    l.in_channels = l.out_channels = channels;
    l.in_height = l.in_width = l.out_height = l.out_width = extent;
    l.kernel_h = l.kernel_w = 3;
    l.pad_h = l.pad_w = 1;
    l.is_network_input_consumer = i == 0;
    l.is_network_output_producer = i == n - 1;
    if (i > 0) l.predecessors = {i - 1};
    layers.push_back(l);
  }
  return ModelGraph("conv_chain", layers);
}

// 3: stage 2 against brute force over every order and duration.
Outcome dlsa_optimality() {
  const auto g = std::make_shared<const ModelGraph>(conv_chain(3, 32, 32));
  ScheduleEncoding enc;
  enc.computing_order = {0, 1, 2};
  enc.tiling_numbers = {2};
  auto hw = toy_hw();
  hw.dram_read_bytes_per_cycle = hw.dram_write_bytes_per_cycle = 0.5;
  const auto db = double_buffer_dlsa(parse_lfa(g, enc));
  const auto db_report = simulate(db, hw, kHuge, {.record_timeline = false});
  const std::int64_t budget = db_report.peak_buffer_bytes;  // prefetching has to fit the same space
  const Objective obj;
  const auto opt = oracle::exhaustive_dlsa_optimum(db, hw, budget, obj);

  SearchState in;
  in.graph = g;
  in.best = in.current = db.encoding();
  in.best_plan = in.current_plan = db;
  in.best_cost = in.current_cost = cost(simulate(db, hw, budget), obj.n, obj.m);
  SAParams sa;
  sa.seed = 1;
  const auto s2 = stage2_explore(in, hw, budget, sa, obj);
  const double ratio = s2.best_cost / opt.cost;
  const bool ok = db.tensor_count() <= 8 && std::isfinite(opt.cost) && ratio <= 1.05;
  return {ok, std::to_string(db.tensor_count()) + " tensors, " + std::to_string(opt.evaluated) +
                  " schedules enumerated; double buffer/opt " + fmt(in.best_cost / opt.cost, 6) +
                  ", stage 2/opt " + fmt(ratio, 6)};
}

// 4: the full search against every toy5 layer-fusion encoding.
constexpr std::int64_t kToyTilingCap = 64;
Outcome lfa_optimality() {
  const auto g = builtin_workload("toy5", 1);
  const auto hw = toy_hw();
  const Objective obj;
  const auto opt = oracle::exhaustive_lfa_optimum(g, hw, hw.gbuf_bytes, obj, kToyTilingCap);
  SAParams sa;
  sa.seed = 1;
  const auto s = buffer_allocator_loop(g, hw, {}, sa);
  const double ratio = s.best_cost / opt.cost;
  return {std::isfinite(opt.cost) && ratio <= 1.05,
          std::to_string(opt.evaluated) + " encodings enumerated (tiling <= " +
              std::to_string(kToyTilingCap) + "); search/opt " + fmt(ratio, 6)};
}

struct DominanceRun {
  std::string workload;
  std::int64_t batch;
  SearchState soma, baseline;
  double soma_seconds;
};

// 5: full search never loses to the fusion-only baseline.
Outcome baseline_dominance(std::vector<DominanceRun>& runs) {
  const auto hw = hardware_preset("edge");
  SAParams sa;
  sa.seed = 1;
  double log_sum = 0;
  int n = 0;
  bool ok = true;
  std::string detail;
  for (const auto& name : builtin_workload_names()) {
    for (std::int64_t batch : {1, 4}) {
      const auto g = builtin_workload(name, batch);
      const auto t0 = std::chrono::steady_clock::now();
      auto soma_state = buffer_allocator_loop(g, hw, {}, sa);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      auto base = baseline_schedule(g, hw, sa);
      const double ratio = base.best_cost / soma_state.best_cost;
      ok = ok && soma_state.feasible() && soma_state.best_cost <= base.best_cost;
      if (std::isfinite(ratio)) log_sum += std::log(ratio);
      ++n;
      detail += "\n    " + name + " b" + std::to_string(batch) + ": baseline/soma " + fmt(ratio);
      runs.push_back({name, batch, std::move(soma_state), std::move(base), secs});
    }
  }
  const double geomean = std::exp(log_sum / n);
  ok = ok && geomean > 1.0;
  return {ok, "geomean improvement " + fmt(geomean) + detail};
}

// 6: gap to the lower bound on the residual chain at batch 4.
Outcome bound_gap(const std::vector<DominanceRun>& runs) {
  for (const auto& r : runs) {
    if (r.workload != "resnet_block_chain" || r.batch != 4) continue;
    const auto& rep = r.soma.best_report;
    const double gap = static_cast<double>(rep.latency_cycles - rep.lower_bound_cycles) /
                       static_cast<double>(rep.lower_bound_cycles);
    return {rep.valid && gap <= 0.15 && r.soma_seconds < 1800,
            "latency " + std::to_string(rep.latency_cycles) + " vs bound " +
                std::to_string(rep.lower_bound_cycles) + ", gap " + fmt(gap * 100, 3) + "%, search " +
                fmt(r.soma_seconds, 3) + " s"};
  }
  return {false, "resnet_block_chain batch 4 run missing"};
}

// 7: invariants under random moves and full searches.
Outcome invariant_suite() {
  Check c;
  Rng rng(77);
  const auto hw = hardware_preset("edge");
  const LfaMoveKind kinds[] = {LfaMoveKind::order, LfaMoveKind::tiling, LfaMoveKind::flc,
                               LfaMoveKind::dram_cut};
  for (const auto& name : builtin_workload_names()) {
    for (std::int64_t batch : {1, 4}) {
      const auto g = std::make_shared<const ModelGraph>(builtin_workload(name, batch));
      const std::string tag = name + " b" + std::to_string(batch);

      // Every proposed encoding keeps DRAM cuts inside the FLC set.
      auto enc = initial_encoding(*g);
      for (int i = 0; i < 1500; ++i) {
        enc = propose_lfa_move(*g, enc, kinds[std::uniform_int_distribution<int>(0, 3)(rng)], rng)
                  .encoding;
        bool subset = true;
        for (int cut : enc.dram_cut_set) subset = subset && enc.flc_set.count(cut);
        c.expect(subset && validate_encoding(*g, enc).empty(), tag + ": proposed encoding valid");
      }

      for (int trial = 0; trial < 30; ++trial) {
        const auto lfa = double_buffer_dlsa(parse_lfa(g, testing::random_lfa(*g, rng, 16)));
        const double energy = simulate(lfa, hw, kHuge, {.record_timeline = false}).energy_total;
        auto plan = lfa;
        for (int i = 0; i < 30; ++i) {
          plan = propose_dlsa_move(plan, i % 2 ? DlsaMoveKind::order : DlsaMoveKind::duration, rng)
                     .plan;
          const auto r = simulate(plan, hw, kHuge, {.record_timeline = false});
          if (!r.valid) continue;
          c.expect(std::abs(r.energy_total - energy) <= 1e-9 * energy, tag + ": energy DLSA-invariant");
          for (double factor : {1.5, 2.0, 4.0}) {
            auto fast = hw;
            fast.dram_read_bytes_per_cycle *= factor;
            fast.dram_write_bytes_per_cycle *= factor;
            const auto f = simulate(plan, fast, kHuge, {.record_timeline = false});
            c.expect(f.valid && f.latency_cycles <= r.latency_cycles, tag + ": bandwidth monotone");
          }
        }
      }

      // Buffer safety on every accepted scheme of an annealing chain under a tight budget.
      const auto start = double_buffer_dlsa(parse_lfa(g, initial_encoding(*g)));
      const std::int64_t budget =
          simulate(start, hw, kHuge, {.record_timeline = false}).peak_buffer_bytes * 3 / 4;
      auto cur_enc = initial_encoding(*g);
      double cur = evaluate_plan(start, hw, budget, {}).cost;
      for (int i = 0; i < 300; ++i) {
        const auto m = propose_lfa_move(*g, cur_enc, kinds[i % 4], rng);
        if (m.noop) continue;
        const auto p = double_buffer_dlsa(parse_lfa(g, m.encoding));
        const auto ev = evaluate_plan(p, hw, budget, {});
        if (!sa_accept(cur, ev.cost, sa_temperature(i, 300, 0.5, 2), rng)) continue;
        cur = ev.cost;
        cur_enc = m.encoding;
        if (!std::isfinite(cur)) continue;
        const auto occ = buffer_timeline(p);
        c.expect(*std::max_element(occ.begin(), occ.end()) <= budget, tag + ": accepted scheme fits");
      }
    }
  }

  // Seed determinism and stage-2 immutability of the layer-fusion attributes.
  SAParams sa;
  sa.seed = 3;
  sa.record_log = true;
  sa.lfa_beta = 30;
  sa.dlsa_beta = 60;
  for (const auto& name : builtin_workload_names()) {
    const auto g = builtin_workload(name, 1);
    const auto a = buffer_allocator_loop(g, hw, {}, sa);
    const auto b = buffer_allocator_loop(g, hw, {}, sa);
    c.expect(serialize_encoding(a.best) == serialize_encoding(b.best) &&
                 serialize_report(a.best_report) == serialize_report(b.best_report) &&
                 search_log_csv(a.log) == search_log_csv(b.log),
             name + ": identical runs per seed");
    c.expect(a.best_report.peak_buffer_bytes <= hw.gbuf_bytes, name + ": final scheme fits");
    const auto s1 = stage1_explore(g, hw, hw.gbuf_bytes, sa);
    const auto s2 = stage2_explore(s1, hw, hw.gbuf_bytes, sa);
    c.expect(s2.best.same_lfa(s1.best) &&
                 s2.best_plan.shared_structure() == s1.best_plan.shared_structure(),
             name + ": stage 2 keeps the layer-fusion attributes");
  }
  return {c.ok(), std::to_string(c.count()) + " checks, " + std::to_string(c.failed()) + " failed" +
                      c.failures()};
}

// 8: a 3x3 bandwidth/buffer sweep on toy5.
Outcome dse_sweep() {
  RunConfig cfg;
  cfg.workload = "toy5";
  cfg.bandwidths_gbps = {8, 16, 32};
  cfg.buffers = {96 << 10, 256 << 10, 8 << 20};
  cfg.out_dir = (std::filesystem::temp_directory_path() / "soma_acceptance_dse").string();
  std::filesystem::remove_all(cfg.out_dir);
  std::ostringstream out, err;
  const int status = cmd_dse(cfg, out, err);
  std::ifstream in(std::filesystem::path(cfg.out_dir) / "dse.csv");
  std::string line;
  std::getline(in, line);
  Check c;
  c.expect(status == 0, "dse exit 0: " + err.str());
  c.expect(line.rfind(std::string(kDseSchema), 0) == 0, "schema header");
  int searched = 0;
  std::map<std::string, std::vector<std::pair<double, double>>> fixed;  // buffer -> (bw, latency)
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (line.back() == ',') f.emplace_back();
    c.expect(f.size() == 13, "13 fields per row");
    if (f.size() != 13) continue;
    if (f[1] == "soma") {
      ++searched;
      c.expect(f[5] == "1", "searched point valid");
    }
    if (f[1] == "fixed_plan") {
      c.expect(f[5] == "1", "fixed-plan row valid");
      fixed[f[4]].emplace_back(std::stod(f[2]), f[5] == "1" ? std::stod(f[6]) : INFINITY);
    }
  }
  c.expect(searched == 9, "9 searched points");
  for (auto& [buffer, pts] : fixed) {
    std::sort(pts.begin(), pts.end());
    c.expect(pts.size() == 3, "3 fixed-plan rows per buffer");
    for (std::size_t i = 1; i < pts.size(); ++i) {
      c.expect(pts[i].second <= pts[i - 1].second, "fixed-plan latency non-increasing at " + buffer);
    }
  }
  return {c.ok(), std::to_string(searched) + " searched points, " + std::to_string(fixed.size()) +
                      " fixed-plan series" + c.failures()};
}

}  // namespace

int main() {
  std::vector<DominanceRun> runs;
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;  // 0: no runtime limit
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "toy5 timeline matches the oracle", 1, toy5_timeline},
      {2, "latency >= lower bound on random plans", 60, lower_bound_property},
      {3, "stage 2 within 5% of exhaustive DRAM schedule", 300, dlsa_optimality},
      {4, "search within 5% of exhaustive toy5 fusion", 600, lfa_optimality},
      {5, "search cost <= baseline on every workload", 0, [&] { return baseline_dominance(runs); }},
      {6, "resnet chain b4 within 15% of lower bound", 1800, [&] { return bound_gap(runs); }},
      {7, "invariant suite", 120, invariant_suite},
      {8, "3x3 DSE sweep on toy5", 600, dse_sweep},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_seconds == 0 || secs < c.limit_seconds;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " ["
              << fmt(secs, 3) << " s" << (in_time ? "" : ", over time limit") << "] " << o.detail
              << std::endl;
  }
  return failed;
}
