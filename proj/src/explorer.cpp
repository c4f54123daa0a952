// SPDX-License-Identifier: Apache-2.0

#include "soma/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace soma {

std::vector<std::string> validate_sa_params(const SAParams& p) {
  std::vector<std::string> out;
  if (!(p.t0 > 0)) out.emplace_back("T0 must be positive");
  if (!(p.alpha >= 0)) out.emplace_back("alpha must be non-negative");
  if (!(p.lfa_beta >= 1) || !(p.dlsa_beta >= 1)) out.emplace_back("beta must be >= 1");
  if (p.post_limit_iters < 0) out.emplace_back("post-limit iterations must be >= 0");
  if (p.wall_clock_limit && p.wall_clock_limit->count() < 0) {
    out.emplace_back("wall-clock limit must be non-negative");
  }
  return out;
}

std::string_view to_string(SearchStage stage) {
  switch (stage) {
    case SearchStage::stage1: return "stage1";
    case SearchStage::stage2: return "stage2";
    case SearchStage::baseline: return "baseline";
  }
  return "?";
}

std::string_view to_string(LfaMoveKind kind) {
  switch (kind) {
    case LfaMoveKind::order: return "order";
    case LfaMoveKind::tiling: return "tiling";
    case LfaMoveKind::flc: return "flc";
    case LfaMoveKind::dram_cut: return "dram_cut";
  }
  return "?";
}

std::string_view to_string(DlsaMoveKind kind) {
  switch (kind) {
    case DlsaMoveKind::order: return "order";
    case DlsaMoveKind::duration: return "duration";
  }
  return "?";
}

double sa_temperature(std::int64_t n, std::int64_t total, double t0, double alpha) {
  if (total <= 0) return 0.0;
  const double x = std::clamp(static_cast<double>(n) / static_cast<double>(total), 0.0, 1.0);
  return t0 * (1.0 - x) / (1.0 + alpha * x);
}

bool sa_accept(double cost, double candidate, double temperature, Rng& rng) {
  if (candidate <= cost) return true;
  if (std::isinf(candidate)) return false;
  if (!(temperature > 0) || !(cost > 0)) return false;
  const double p = std::exp((cost - candidate) / (cost * temperature));
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

Evaluation evaluate_plan(const ExecutionPlan& plan, const HardwareConfig& hw,
                         std::int64_t budget_bytes, const Objective& obj) {
  Evaluation e;
  e.report = simulate(plan, hw, budget_bytes, {.record_timeline = false});
  e.cost = cost(e.report, obj.n, obj.m);
  return e;
}

namespace {

template <typename T>
T uniform_int(T lo, T hi, Rng& rng) {
  return std::uniform_int_distribution<T>(lo, hi)(rng);
}

template <typename C>
auto pick(const C& items, Rng& rng) {
  auto it = items.begin();
  std::advance(it, uniform_int<std::size_t>(0, items.size() - 1, rng));
  return *it;
}

// Start position of each fused group, plus the total length at the end.
std::vector<int> group_starts(const ScheduleEncoding& enc) {
  std::vector<int> starts{0};
  for (int c : enc.flc_set) starts.push_back(c);
  starts.push_back(static_cast<int>(enc.computing_order.size()));
  return starts;
}

std::vector<int> group_ids(const ScheduleEncoding& enc, int begin, int end) {
  return {enc.computing_order.begin() + begin, enc.computing_order.begin() + end};
}

std::optional<LfaMove> move_order(const ModelGraph& graph, const ScheduleEncoding& enc, Rng& rng) {
  const int n = static_cast<int>(enc.computing_order.size());
  std::vector<int> candidates(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) candidates[static_cast<std::size_t>(i)] = i;
  std::shuffle(candidates.begin(), candidates.end(), rng);
  for (int from : candidates) {
    const int id = enc.computing_order[static_cast<std::size_t>(from)];
    std::vector<int> rest = enc.computing_order;
    rest.erase(rest.begin() + from);
    int lo = 0;
    int hi = n - 1;
    const auto& layer = graph.layer(id);
    const auto succs = graph.successors(id);
    for (int j = 0; j < n - 1; ++j) {
      const int other = rest[static_cast<std::size_t>(j)];
      if (std::find(layer.predecessors.begin(), layer.predecessors.end(), other) !=
          layer.predecessors.end()) {
        lo = std::max(lo, j + 1);
      }
      if (std::find(succs.begin(), succs.end(), other) != succs.end()) hi = std::min(hi, j);
    }
    std::vector<int> targets;
    for (int j = lo; j <= hi; ++j) {
      if (j != from) targets.push_back(j);
    }
    if (targets.empty()) continue;
    const int to = pick(targets, rng);
    LfaMove m;
    m.encoding = enc;
    rest.insert(rest.begin() + to, id);
    m.encoding.computing_order = std::move(rest);
    repair_tilings(graph, m.encoding);
    m.description = "order " + layer.name + " " + std::to_string(from) + "->" + std::to_string(to);
    return m;
  }
  return std::nullopt;
}

std::optional<LfaMove> move_tiling(const ModelGraph& graph, const ScheduleEncoding& enc, Rng& rng) {
  const std::size_t g = uniform_int<std::size_t>(0, enc.tiling_numbers.size() - 1, rng);
  auto up = change_tiling(graph, enc, g, true);
  auto down = change_tiling(graph, enc, g, false);
  if (!up && !down) return std::nullopt;
  const bool multiply = up && (!down || uniform_int(0, 1, rng) == 1);
  LfaMove m;
  m.encoding = multiply ? std::move(*up) : std::move(*down);
  m.description = std::string("tiling group ") + std::to_string(g) + (multiply ? " x2" : " /2");
  return m;
}

std::optional<LfaMove> move_flc(const ModelGraph& graph, const ScheduleEncoding& enc, Rng& rng) {
  const int n = static_cast<int>(enc.computing_order.size());
  std::vector<int> addable, removable;
  for (int p = 1; p < n; ++p) {
    if (!enc.flc_set.count(p)) addable.push_back(p);
    else if (!enc.dram_cut_set.count(p)) removable.push_back(p);
  }
  if (addable.empty() && removable.empty()) return std::nullopt;
  const bool add = !addable.empty() && (removable.empty() || uniform_int(0, 1, rng) == 1);
  const auto starts = group_starts(enc);
  LfaMove m;
  m.encoding = enc;
  auto& tilings = m.encoding.tiling_numbers;
  if (add) {
    const int p = pick(addable, rng);
    const auto g = static_cast<std::size_t>(
        std::upper_bound(starts.begin(), starts.end(), p) - starts.begin() - 1);
    m.encoding.flc_set.insert(p);
    tilings.insert(tilings.begin() + static_cast<std::ptrdiff_t>(g) + 1, tilings[g]);
    m.description = "flc add " + std::to_string(p);
  } else {
    const int p = pick(removable, rng);
    const auto right = static_cast<std::size_t>(
        std::lower_bound(starts.begin(), starts.end(), p) - starts.begin());
    const std::size_t left = right - 1;
    const auto left_layers = static_cast<std::size_t>(starts[right] - starts[left]);
    const auto right_layers = static_cast<std::size_t>(starts[right + 1] - starts[right]);
    const auto t = merged_tiling(tilings[left], left_layers, tilings[right], right_layers, rng);
    m.encoding.flc_set.erase(p);
    tilings[left] = t;
    tilings.erase(tilings.begin() + static_cast<std::ptrdiff_t>(right));
    m.description = "flc delete " + std::to_string(p);
  }
  repair_tilings(graph, m.encoding);
  return m;
}

std::optional<LfaMove> move_dram_cut(const ScheduleEncoding& enc, Rng& rng) {
  std::vector<int> addable, removable;
  for (int p : enc.flc_set) {
    if (enc.dram_cut_set.count(p)) removable.push_back(p);
    else addable.push_back(p);
  }
  if (addable.empty() && removable.empty()) return std::nullopt;
  const bool add = !addable.empty() && (removable.empty() || uniform_int(0, 1, rng) == 1);
  LfaMove m;
  m.encoding = enc;
  const int p = pick(add ? addable : removable, rng);
  if (add) m.encoding.dram_cut_set.insert(p);
  else m.encoding.dram_cut_set.erase(p);
  m.description = std::string("dram_cut ") + (add ? "add " : "delete ") + std::to_string(p);
  return m;
}

}  // namespace

std::optional<ScheduleEncoding> change_tiling(const ModelGraph& graph, const ScheduleEncoding& enc,
                                              std::size_t group, bool multiply) {
  if (group >= enc.tiling_numbers.size()) return std::nullopt;
  const auto t = enc.tiling_numbers[group];
  if (!multiply && t <= 1) return std::nullopt;
  const auto next = multiply ? t * 2 : t / 2;
  if (multiply) {
    const auto starts = group_starts(enc);
    if (!geometry_feasible(graph, group_ids(enc, starts[group], starts[group + 1]), next)) {
      return std::nullopt;
    }
  }
  ScheduleEncoding out = enc;
  out.tiling_numbers[group] = next;
  return out;
}

void repair_tilings(const ModelGraph& graph, ScheduleEncoding& enc) {
  const auto starts = group_starts(enc);
  for (std::size_t g = 0; g < enc.tiling_numbers.size(); ++g) {
    const auto ids = group_ids(enc, starts[g], starts[g + 1]);
    auto& t = enc.tiling_numbers[g];
    while (t > 1 && !geometry_feasible(graph, ids, t)) t /= 2;
  }
}

std::int64_t merged_tiling(std::int64_t left_tiling, std::size_t left_layers,
                           std::int64_t right_tiling, std::size_t right_layers, Rng& rng) {
  const double total = static_cast<double>(left_layers + right_layers);
  const double p_left = total > 0 ? static_cast<double>(left_layers) / total : 0.5;
  return std::bernoulli_distribution(p_left)(rng) ? left_tiling : right_tiling;
}

bool lfa_move_applicable(const ModelGraph& graph, const ScheduleEncoding& enc, LfaMoveKind kind) {
  switch (kind) {
    case LfaMoveKind::order:
    case LfaMoveKind::flc: return graph.size() > 1;
    case LfaMoveKind::tiling: return !enc.tiling_numbers.empty();
    case LfaMoveKind::dram_cut: return !enc.flc_set.empty();
  }
  return false;
}

LfaMove propose_lfa_move(const ModelGraph& graph, const ScheduleEncoding& enc, LfaMoveKind kind,
                         Rng& rng) {
  std::optional<LfaMove> m;
  if (lfa_move_applicable(graph, enc, kind)) {
    switch (kind) {
      case LfaMoveKind::order: m = move_order(graph, enc, rng); break;
      case LfaMoveKind::tiling: m = move_tiling(graph, enc, rng); break;
      case LfaMoveKind::flc: m = move_flc(graph, enc, rng); break;
      case LfaMoveKind::dram_cut: m = move_dram_cut(enc, rng); break;
    }
  }
  if (!m) return {enc, true, std::string(to_string(kind)) + " noop"};
  return std::move(*m);
}

// ---------------------------------------------------------------------------
// DRAM-attribute moves

int pick_tensor(const ExecutionPlan& plan, Rng& rng) {
  if (plan.tensor_count() == 0) return -1;
  std::vector<double> weights;
  weights.reserve(plan.tensor_count());
  for (std::size_t id = 0; id < plan.tensor_count(); ++id) {
    weights.push_back(static_cast<double>(plan.tensor_info(static_cast<int>(id)).bytes));
  }
  std::discrete_distribution<int> dist(weights.begin(), weights.end());
  return dist(rng);
}

DlsaMove propose_dlsa_move(const ExecutionPlan& plan, DlsaMoveKind kind, Rng& rng) {
  return propose_dlsa_move(plan, kind, pick_tensor(plan, rng), rng);
}

DlsaMove propose_dlsa_move(const ExecutionPlan& plan, DlsaMoveKind kind, int tensor, Rng& rng) {
  DlsaMove m{plan, true, tensor, std::string(to_string(kind)) + " noop"};
  if (tensor < 0 || static_cast<std::size_t>(tensor) >= plan.tensor_count()) return m;
  const auto& t = plan.tensor_info(tensor);
  if (kind == DlsaMoveKind::duration) {
    auto durations = plan.living_durations();
    auto& d = durations[static_cast<std::size_t>(tensor)];
    int lo, hi;
    int* field;
    if (t.is_load()) {
      lo = 0;
      hi = t.first_consumer;
      field = &d.start;
    } else {
      lo = t.producer + 1;
      hi = plan.virtual_end();
      field = &d.end;
    }
    if (hi <= lo) return m;
    // Uniform over the other values in [lo, hi].
    int v = uniform_int(lo, hi - 1, rng);
    if (v >= *field) ++v;
    *field = v;
    m.plan.set_dlsa(plan.dram_tensor_order(), std::move(durations));
    m.noop = false;
    m.description = t.name + (t.is_load() ? " start " : " end ") + std::to_string(v);
    return m;
  }

  const auto& order = plan.dram_tensor_order();
  const int n = static_cast<int>(order.size());
  if (n < 2) return m;
  std::vector<int> rest;
  rest.reserve(order.size());
  int from = 0;
  for (int k = 0; k < n; ++k) {
    if (order[static_cast<std::size_t>(k)] == tensor) from = k;
    else rest.push_back(order[static_cast<std::size_t>(k)]);
  }
  // Tile a tensor waits for before the channel may serve it (-1: none), and
  // the first tile that cannot start without it. A tensor queued ahead of
  // one its own wait depends on can never be served.
  const int nt = plan.virtual_end();
  auto waits_for = [&](const DramTensor& x) {
    return x.is_load() ? plan.duration(x.id).start - 1 : x.producer;
  };
  auto needed_by = [&](const DramTensor& x) {
    return x.is_load() ? x.first_consumer : plan.duration(x.id).end;
  };
  const int wait = waits_for(t);
  const int need = needed_by(t);
  // Loads also stay behind the stores that produce their data.
  int lo = 0;
  int hi = n - 1;
  for (int j = 0; j < n - 1; ++j) {
    const auto& other = plan.tensor_info(rest[static_cast<std::size_t>(j)]);
    const int other_need = needed_by(other);
    if (other_need < nt && other_need <= wait) lo = std::max(lo, j + 1);
    if (need < nt && waits_for(other) >= need) hi = std::min(hi, j);
    if (t.is_load()) {
      if (std::find(t.after_stores.begin(), t.after_stores.end(), other.id) != t.after_stores.end()) {
        lo = std::max(lo, j + 1);
      }
    } else if (std::find(other.after_stores.begin(), other.after_stores.end(), tensor) !=
               other.after_stores.end()) {
      hi = std::min(hi, j);
    }
  }
  const bool skip = lo <= from && from <= hi;
  if (hi - lo + 1 - (skip ? 1 : 0) < 1) return m;
  int to = uniform_int(lo, hi - (skip ? 1 : 0), rng);
  if (skip && to >= from) ++to;
  rest.insert(rest.begin() + to, tensor);
  m.plan.set_dlsa(std::move(rest), plan.living_durations());
  m.noop = false;
  m.description = t.name + " order " + std::to_string(from) + "->" + std::to_string(to);
  return m;
}

// ---------------------------------------------------------------------------
// Annealing driver

namespace {

class Schedule {
 public:
  Schedule(std::int64_t total, const SAParams& sa) : total_(total), sa_(sa) {
    start_ = std::chrono::steady_clock::now();
  }

  // Advances to the next iteration; false when the run is over.
  bool next() {
    if (greedy_) return greedy_left_-- > 0;
    if (n_ >= total_) return false;
    if (sa_.wall_clock_limit &&
        std::chrono::steady_clock::now() - start_ > *sa_.wall_clock_limit) {
      greedy_ = true;
      greedy_left_ = sa_.post_limit_iters;
      return greedy_left_-- > 0;
    }
    ++n_;
    return true;
  }

  bool greedy() const { return greedy_; }
  double temperature() const {
    return greedy_ ? 0.0 : sa_temperature(n_ - 1, total_, sa_.t0, sa_.alpha);
  }

 private:
  std::int64_t total_;
  const SAParams& sa_;
  std::chrono::steady_clock::time_point start_;
  std::int64_t n_ = 0;
  bool greedy_ = false;
  std::int64_t greedy_left_ = 0;
};

bool accept(double current, double candidate, const Schedule& schedule, Rng& rng) {
  if (schedule.greedy()) return candidate < current;
  return sa_accept(current, candidate, schedule.temperature(), rng);
}

void record(SearchState& s, const SAParams& sa, SearchStage stage, int outer,
            const std::string& move, double temperature, double c, bool accepted) {
  ++s.iterations;
  if (!sa.record_log) return;
  s.log.push_back({stage, outer, s.iterations, move, temperature, c, accepted, s.best_cost});
}

std::int64_t iteration_budget(double beta, std::size_t count) {
  return static_cast<std::int64_t>(std::ceil(beta * static_cast<double>(count)));
}

void finalize(SearchState& s, const HardwareConfig& hw) {
  if (s.best_plan.tensor_count() > 0 || s.best_plan.tile_count() > 0) {
    s.best_report = simulate(s.best_plan, hw, s.budget_bytes);
  }
  s.buffer_max = s.best_report.peak_buffer_bytes;
}

// Stage-1 style search over layer-fusion attributes. `propose` returns the
// next candidate encoding (noop when unchanged).
template <typename Propose>
SearchState lfa_search(std::shared_ptr<const ModelGraph> graph, const HardwareConfig& hw,
                       std::int64_t budget, const SAParams& sa, const Objective& obj, Rng& rng,
                       SearchStage stage, ScheduleEncoding initial, Propose propose, int outer) {
  SearchState s;
  s.graph = graph;
  s.budget_bytes = budget;
  s.outer_iterations = outer;
  s.current = std::move(initial);
  s.current_plan = double_buffer_dlsa(parse_lfa(graph, s.current));
  auto e = evaluate_plan(s.current_plan, hw, budget, obj);
  ++s.evaluations;
  s.current_cost = e.cost;
  s.best = s.current;
  s.best_plan = s.current_plan;
  s.best_report = std::move(e.report);
  s.best_cost = s.current_cost;

  Schedule schedule(iteration_budget(sa.lfa_beta, graph->size()), sa);
  while (schedule.next()) {
    LfaMove m = propose(s.current, rng);
    if (m.noop) {
      record(s, sa, stage, outer, m.description, schedule.temperature(), s.current_cost, false);
      continue;
    }
    auto plan = double_buffer_dlsa(parse_lfa(graph, m.encoding));
    auto ev = evaluate_plan(plan, hw, budget, obj);
    ++s.evaluations;
    const bool ok = accept(s.current_cost, ev.cost, schedule, rng);
    if (ev.cost < s.best_cost) {
      s.best_cost = ev.cost;
      s.best = m.encoding;
      s.best_plan = plan;
      s.best_report = ev.report;
    }
    if (ok) {
      s.current = std::move(m.encoding);
      s.current_plan = std::move(plan);
      s.current_cost = ev.cost;
    }
    record(s, sa, stage, outer, m.description, schedule.temperature(), ev.cost, ok);
  }
  s.best = s.best_plan.encoding();
  finalize(s, hw);
  return s;
}

SearchState stage1_impl(std::shared_ptr<const ModelGraph> graph, const HardwareConfig& hw,
                        std::int64_t budget, const SAParams& sa, const Objective& obj, Rng& rng,
                        int outer) {
  const ModelGraph& g = *graph;
  auto propose = [&g](const ScheduleEncoding& enc, Rng& r) {
    std::vector<LfaMoveKind> kinds;
    for (auto k : {LfaMoveKind::order, LfaMoveKind::tiling, LfaMoveKind::flc,
                   LfaMoveKind::dram_cut}) {
      if (lfa_move_applicable(g, enc, k)) kinds.push_back(k);
    }
    if (kinds.empty()) return LfaMove{enc, true, "noop"};
    return propose_lfa_move(g, enc, pick(kinds, r), r);
  };
  return lfa_search(graph, hw, budget, sa, obj, rng, SearchStage::stage1, initial_encoding(g),
                    propose, outer);
}

SearchState stage2_impl(const SearchState& in, const HardwareConfig& hw, std::int64_t budget,
                        const SAParams& sa, const Objective& obj, Rng& rng, int outer) {
  SearchState s;
  s.graph = in.graph;
  s.budget_bytes = budget;
  s.outer_iterations = outer;
  s.current_plan = in.best_plan.has_dlsa() ? in.best_plan : double_buffer_dlsa(in.best_plan);
  s.current = s.current_plan.encoding();
  auto e = evaluate_plan(s.current_plan, hw, budget, obj);
  ++s.evaluations;
  s.current_cost = e.cost;
  s.best = s.current;
  s.best_plan = s.current_plan;
  s.best_report = std::move(e.report);
  s.best_cost = s.current_cost;

  const auto& plan0 = s.current_plan;
  const auto n = plan0.tensor_count();
  if (n > 0) {
    std::vector<double> weights;
    weights.reserve(n);
    for (std::size_t id = 0; id < n; ++id) {
      weights.push_back(static_cast<double>(plan0.tensor_info(static_cast<int>(id)).bytes));
    }
    std::discrete_distribution<int> by_size(weights.begin(), weights.end());
    Schedule schedule(iteration_budget(sa.dlsa_beta, n), sa);
    while (schedule.next()) {
      const auto kind = uniform_int(0, 1, rng) == 0 ? DlsaMoveKind::order : DlsaMoveKind::duration;
      const int tensor = by_size(rng);
      DlsaMove m = propose_dlsa_move(s.current_plan, kind, tensor, rng);
      if (m.noop) {
        record(s, sa, SearchStage::stage2, outer, m.description, schedule.temperature(),
               s.current_cost, false);
        continue;
      }
      auto ev = evaluate_plan(m.plan, hw, budget, obj);
      ++s.evaluations;
      const bool ok = accept(s.current_cost, ev.cost, schedule, rng);
      if (ev.cost < s.best_cost) {
        s.best_cost = ev.cost;
        s.best_plan = m.plan;
        s.best_report = ev.report;
      }
      if (ok) {
        s.current_plan = std::move(m.plan);
        s.current_cost = ev.cost;
      }
      record(s, sa, SearchStage::stage2, outer, m.description, schedule.temperature(), ev.cost,
             ok);
    }
  }
  s.current = s.current_plan.encoding();
  s.best = s.best_plan.encoding();
  finalize(s, hw);
  return s;
}

void append_log(SearchState& into, std::vector<EvalLogEntry>& log) {
  into.log.insert(into.log.end(), std::make_move_iterator(log.begin()),
                  std::make_move_iterator(log.end()));
  log.clear();
}

}  // namespace

SearchState stage1_explore(std::shared_ptr<const ModelGraph> graph, const HardwareConfig& hw,
                           std::int64_t budget_bytes, const SAParams& sa, const Objective& obj,
                           Rng& rng) {
  return stage1_impl(std::move(graph), hw, budget_bytes, sa, obj, rng, 1);
}

SearchState stage1_explore(const ModelGraph& graph, const HardwareConfig& hw,
                           std::int64_t budget_bytes, const SAParams& sa, const Objective& obj) {
  Rng rng(sa.seed);
  return stage1_explore(std::make_shared<const ModelGraph>(graph), hw, budget_bytes, sa, obj, rng);
}

SearchState stage2_explore(const SearchState& state, const HardwareConfig& hw,
                           std::int64_t budget_bytes, const SAParams& sa, const Objective& obj,
                           Rng& rng) {
  return stage2_impl(state, hw, budget_bytes, sa, obj, rng, 1);
}

SearchState stage2_explore(const SearchState& state, const HardwareConfig& hw,
                           std::int64_t budget_bytes, const SAParams& sa, const Objective& obj) {
  Rng rng(sa.seed);
  return stage2_explore(state, hw, budget_bytes, sa, obj, rng);
}

std::int64_t stage1_limit(std::int64_t buffer_max, int k, double shrink) {
  const double limit = static_cast<double>(buffer_max) * (1.0 - static_cast<double>(k - 1) * shrink);
  return static_cast<std::int64_t>(std::floor(limit + 1e-9));
}

SearchState buffer_allocator_loop(const ModelGraph& graph, const HardwareConfig& hw,
                                  const AllocatorParams& alloc, const SAParams& sa) {
  auto g = std::make_shared<const ModelGraph>(graph);
  Rng rng(sa.seed);
  std::vector<EvalLogEntry> log;
  std::int64_t iterations = 0, evaluations = 0;
  auto absorb = [&](SearchState& s) {
    iterations += s.iterations;
    evaluations += s.evaluations;
    log.insert(log.end(), std::make_move_iterator(s.log.begin()),
               std::make_move_iterator(s.log.end()));
    s.log.clear();
  };

  auto s1 = stage1_impl(g, hw, hw.gbuf_bytes, sa, alloc.objective, rng, 1);
  absorb(s1);
  const std::int64_t buffer_max = s1.buffer_max;
  SearchState best = s1.feasible() ? stage2_impl(s1, hw, hw.gbuf_bytes, sa, alloc.objective, rng, 1)
                                   : s1;
  if (s1.feasible()) absorb(best);
  int outer = 1;
  int non_improving = 0;
  for (int k = 2; s1.feasible() && non_improving < alloc.stop_after_non_improving; ++k) {
    const auto limit = std::min(stage1_limit(buffer_max, k, alloc.shrink), hw.gbuf_bytes);
    if (limit <= 0) break;
    outer = k;
    auto a = stage1_impl(g, hw, limit, sa, alloc.objective, rng, k);
    absorb(a);
    if (!a.feasible()) {
      ++non_improving;
      continue;
    }
    auto b = stage2_impl(a, hw, hw.gbuf_bytes, sa, alloc.objective, rng, k);
    absorb(b);
    if (b.best_cost < best.best_cost) {
      best = std::move(b);
      non_improving = 0;
    } else {
      ++non_improving;
    }
  }
  best.buffer_max = buffer_max;
  best.outer_iterations = outer;
  best.iterations = iterations;
  best.evaluations = evaluations;
  best.budget_bytes = hw.gbuf_bytes;
  append_log(best, log);
  return best;
}

// ---------------------------------------------------------------------------
// Baseline

std::int64_t baseline_tiling(const ModelGraph& graph, const std::vector<int>& group,
                             const HardwareConfig& hw, const BaselineParams& params) {
  const std::int64_t per_tile =
      hw.peak_macs_per_cycle() * std::max<std::int64_t>(1, params.tile_cycle_quantum);
  std::int64_t t = 1;
  for (int id : group) {
    const auto ops = layer_ops(graph.layer(id));
    while ((ops + t - 1) / t > per_tile) t *= 2;
  }
  const auto cap = max_tiling_number(graph, group);
  return std::min(t, cap);
}

SearchState baseline_schedule(const ModelGraph& graph, const HardwareConfig& hw,
                              const SAParams& sa, const Objective& obj,
                              const BaselineParams& params) {
  auto g = std::make_shared<const ModelGraph>(graph);
  Rng rng(sa.seed);
  auto retile = [&](ScheduleEncoding& enc) {
    enc.tiling_numbers.clear();
    for (const auto& group : fused_groups(enc)) {
      enc.tiling_numbers.push_back(baseline_tiling(graph, group, hw, params));
    }
  };
  ScheduleEncoding init = initial_encoding(graph);
  retile(init);
  auto propose = [&](const ScheduleEncoding& enc, Rng& r) {
    const int n = static_cast<int>(graph.size());
    if (n < 2) return LfaMove{enc, true, "noop"};
    LfaMove m;
    if (uniform_int(0, 1, r) == 0) {
      m = propose_lfa_move(graph, enc, LfaMoveKind::order, r);
    } else {
      const int p = uniform_int(1, n - 1, r);
      m.encoding = enc;
      const bool remove = enc.dram_cut_set.count(p) > 0;
      if (remove) {
        m.encoding.flc_set.erase(p);
        m.encoding.dram_cut_set.erase(p);
      } else {
        m.encoding.flc_set.insert(p);
        m.encoding.dram_cut_set.insert(p);
      }
      m.description = std::string("cut ") + (remove ? "delete " : "add ") + std::to_string(p);
    }
    if (!m.noop) retile(m.encoding);
    return m;
  };
  return lfa_search(g, hw, hw.gbuf_bytes, sa, obj, rng, SearchStage::baseline, std::move(init),
                    propose, 1);
}

std::string search_log_csv(const std::vector<EvalLogEntry>& log) {
  std::ostringstream out;
  out.precision(17);
  out << kSearchLogSchema
      << ",stage,outer_iteration,iteration,move,temperature,cost,accepted,best_cost\n";
  std::size_t row = 0;
  for (const auto& e : log) {
    out << row++ << ',' << to_string(e.stage) << ',' << e.outer_iteration << ',' << e.iteration
        << ',' << e.move << ',' << e.temperature << ',' << e.cost << ',' << (e.accepted ? 1 : 0)
        << ',' << e.best_cost << '\n';
  }
  return out.str();
}

}  // namespace soma
