#include "dualwalk/longpath.hpp"

#include <algorithm>
#include <deque>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "dualwalk/random.hpp"

namespace dualwalk {

namespace {

bool is_real(const KnowledgeGraph& kg, const Edge& e) { return !kg.has_self_loops() || e.relation != kg.no_op(); }

Triple canonical(const KnowledgeGraph& kg, const Triple& t) {
  if (kg.has_inverse_edges() && kg.is_inverse(t.relation)) return {t.target, kg.inverse(t.relation), t.source};
  return t;
}

// All walks of exactly `length` real edges from `from` to `to`.
void walks(const KnowledgeGraph& kg, EntityId from, EntityId to, std::size_t length, std::vector<Triple>& prefix,
           std::vector<std::vector<Triple>>& out) {
  if (length == 0) {
    if (from == to) out.push_back(prefix);
    return;
  }
  for (const auto& e : kg.adjacency(from)) {
    if (!is_real(kg, e)) continue;
    prefix.push_back({from, e.relation, e.target});
    walks(kg, e.target, to, length - 1, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

int bfs_distance(const KnowledgeGraph& kg, EntityId from, EntityId to, std::size_t limit) {
  if (from == to) return 0;
  std::vector<int> dist(kg.num_entities(), -1);
  std::deque<EntityId> queue{from};
  dist[static_cast<std::size_t>(from)] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    const int du = dist[static_cast<std::size_t>(u)];
    if (static_cast<std::size_t>(du) >= limit) continue;
    for (const auto& e : kg.adjacency(u)) {
      if (!is_real(kg, e)) continue;
      auto& dv = dist[static_cast<std::size_t>(e.target)];
      if (dv >= 0) continue;
      dv = du + 1;
      if (e.target == to) return dv;
      queue.push_back(e.target);
    }
  }
  return -1;
}

ShortPathResult find_short_paths(const KnowledgeGraph& kg, std::span<const Triple> tasks, const ShortPathConfig& config) {
  ShortPathResult result;
  result.intermediates.resize(tasks.size());
  std::map<std::vector<Triple>, std::size_t> counts;
  const std::size_t limit = config.max_length;

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& task = tasks[i];
    Rng rng(derive_seed(config.seed, {i}));
    std::vector<std::vector<Triple>> direct;
    if (limit >= 1) {
      std::vector<Triple> prefix;
      walks(kg, task.source, task.target, 1, prefix, direct);
    }
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
      const auto mid = static_cast<EntityId>(rng.below(kg.num_entities()));
      result.intermediates[i].push_back(mid);
      for (const auto& p : direct) ++counts[p];
      if (mid == task.source || mid == task.target) continue;
      const int d1 = bfs_distance(kg, task.source, mid, limit);
      if (d1 <= 0) continue;
      const int d2 = bfs_distance(kg, mid, task.target, limit);
      if (d2 <= 0 || static_cast<std::size_t>(d1 + d2) > limit) continue;
      std::vector<std::vector<Triple>> first, second;
      std::vector<Triple> prefix;
      walks(kg, task.source, mid, static_cast<std::size_t>(d1), prefix, first);
      walks(kg, mid, task.target, static_cast<std::size_t>(d2), prefix, second);
      for (const auto& a : first) {
        for (const auto& b : second) {
          auto path = a;
          path.insert(path.end(), b.begin(), b.end());
          ++counts[path];
        }
      }
    }
  }
  for (auto& [edges, freq] : counts) result.paths.push_back({edges, freq});
  return result;
}

std::vector<Triple> traversed_edges(std::span<const FoundPath> paths, std::size_t min_frequency) {
  std::set<Triple> out;
  for (const auto& p : paths) {
    if (p.frequency < min_frequency) continue;
    for (const auto& e : p.edges) out.insert(e);
  }
  return {out.begin(), out.end()};
}

AblationReport ablate(KnowledgeGraph& kg, std::span<const FoundPath> paths, std::span<const Triple> tasks,
                      std::size_t min_frequency) {
  AblationReport report;
  report.edges_before = kg.edge_count();
  std::set<Triple> edges;
  for (const auto& e : traversed_edges(paths, min_frequency)) edges.insert(canonical(kg, e));
  for (const auto& e : edges) {
    if (kg.remove_edge(e)) report.removed.push_back(e);
  }
  report.edges_after = kg.edge_count();
  std::set<EntityId> sources;
  for (const auto& t : tasks) sources.insert(t.source);
  for (auto s : sources) {
    bool has_real = false;
    for (const auto& e : kg.adjacency(s)) has_real = has_real || is_real(kg, e);
    if (!has_real) ++report.isolated_sources;
  }
  return report;
}

std::size_t remove_relation(KnowledgeGraph& kg, RelationId relation) {
  std::size_t removed = 0;
  for (const auto& t : kg.triples(Split::kTrain)) {
    if (t.relation == relation && kg.has_edge(t) && kg.remove_edge(t)) ++removed;
  }
  return removed;
}

std::vector<LengthMetric> length_sweep(KnowledgeGraph& kg, std::span<const std::size_t> horizons,
                                       const std::function<double(std::size_t)>& measure) {
  std::vector<LengthMetric> out;
  try {
    for (auto T : horizons) out.push_back({T, measure(T)});
  } catch (...) {
    kg.restore_all();
    throw;
  }
  kg.restore_all();
  return out;
}

void write_length_csv(std::ostream& out, std::span<const LengthMetric> rows, const char* metric_name) {
  out << "T," << metric_name << "\n";
  for (const auto& r : rows) out << fmt::format("{},{:.17g}\n", r.horizon, r.value);
}

}  // namespace dualwalk
