#pragma once

// Unlabeled example pools: embedding, k-means clustering, diversity
// round-robin scheduling, and farthest-point pre-filtering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gate/core.hpp"

namespace gate::pool {

using PoolItem = TestItem;
using Vector = std::vector<double>;

inline constexpr int kDefaultClusters = 15;
inline constexpr int kDefaultMaxIters = 100;

struct EmbeddingVector {
  std::string item_id;
  Vector values;
  bool operator==(const EmbeddingVector&) const = default;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Vector embed(std::string_view text) = 0;
};

/// Feature hashing of character trigrams into `dim` signed buckets,
/// L2-normalized. Depends only on the bytes of the input.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dim = 64, std::size_t ngram = 3) : dim_(dim), ngram_(ngram) {
    if (dim_ == 0 || ngram_ == 0) throw Error(Errc::invalid_argument, "embedder dim and ngram must be positive");
  }

  Vector embed(std::string_view text) override {
    Vector v(dim_, 0.0);
    const std::string padded = " " + std::string(text) + " ";
    if (padded.size() < ngram_) return v;
    for (std::size_t i = 0; i + ngram_ <= padded.size(); ++i) {
      const std::uint64_t h = detail::fnv1a(std::string_view(padded).substr(i, ngram_));
      v[h % dim_] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    return v;
  }

 private:
  std::size_t dim_;
  std::size_t ngram_;
};

inline std::vector<EmbeddingVector> embed_pool(std::span<const PoolItem> items, Embedder& embedder) {
  std::vector<EmbeddingVector> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    Vector v = embedder.embed(item.body);
    if (!out.empty() && v.size() != out.front().values.size())
      throw Error(Errc::dimension_mismatch, "embedding of \"" + item.id + "\" has dimension " +
                                                std::to_string(v.size()) + ", expected " +
                                                std::to_string(out.front().values.size()));
    for (double x : v)
      if (!std::isfinite(x)) throw Error(Errc::degenerate, "non-finite embedding for \"" + item.id + "\"");
    out.push_back({item.id, std::move(v)});
  }
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

struct ClusterModel {
  int k = kDefaultClusters;
  // Empty clusters keep an empty centroid.
  std::vector<Vector> centroids;
  std::map<std::string, int> assignment;
  // Per cluster, item ids ordered by (distance to centroid, id).
  std::vector<std::vector<std::string>> members;
  // Within-cluster SSE after each assignment step.
  std::vector<double> objective_history;

  std::size_t nonempty_clusters() const {
    return static_cast<std::size_t>(std::count_if(members.begin(), members.end(), [](const auto& m) { return !m.empty(); }));
  }
};

namespace detail {

inline int nearest(std::span<const Vector> centroids, std::span<const double> x) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (centroids[c].empty()) continue;
    const double d = squared_distance(centroids[c], x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

inline void fill_members(ClusterModel& m, std::span<const EmbeddingVector> vectors) {
  m.members.assign(static_cast<std::size_t>(m.k), {});
  std::vector<std::vector<std::pair<double, std::string>>> ranked(static_cast<std::size_t>(m.k));
  for (const auto& v : vectors) {
    const int c = m.assignment.at(v.item_id);
    ranked[static_cast<std::size_t>(c)].emplace_back(squared_distance(m.centroids[static_cast<std::size_t>(c)], v.values),
                                                     v.item_id);
  }
  for (std::size_t c = 0; c < ranked.size(); ++c) {
    std::sort(ranked[c].begin(), ranked[c].end());
    for (auto& [_, id] : ranked[c]) m.members[c].push_back(std::move(id));
  }
}

}  // namespace detail

/// Lloyd's k-means with k-means++ seeding. Stops when assignments stop
/// changing or after max_iters. With fewer points than clusters every point
/// gets its own cluster and the remainder stay empty.
inline ClusterModel cluster(std::span<const EmbeddingVector> vectors, int k, std::uint64_t seed,
                            int max_iters = kDefaultMaxIters) {
  if (vectors.empty()) throw Error(Errc::invalid_argument, "cannot cluster an empty pool");
  if (k < 1) throw Error(Errc::invalid_argument, "k must be >= 1");
  const std::size_t n = vectors.size();
  const std::size_t kk = static_cast<std::size_t>(k);
  const std::size_t dim = vectors.front().values.size();
  for (const auto& v : vectors)
    if (v.values.size() != dim) throw Error(Errc::dimension_mismatch, "embeddings differ in dimension");

  ClusterModel m;
  m.k = k;
  m.centroids.assign(kk, Vector{});

  if (n < kk) {
    for (std::size_t i = 0; i < n; ++i) {
      m.centroids[i] = vectors[i].values;
      m.assignment[vectors[i].item_id] = static_cast<int>(i);
    }
    m.objective_history.push_back(0.0);
    detail::fill_members(m, vectors);
    return m;
  }

  // k-means++ seeding.
  gate::detail::Rng rng(gate::detail::mix(seed, 0x6b6d65616e73ULL));
  std::vector<bool> chosen(n, false);
  std::size_t first = static_cast<std::size_t>(rng.below(n));
  m.centroids[0] = vectors[first].values;
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(vectors[i].values, m.centroids[0]);
  for (std::size_t c = 1; c < kk; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += chosen[i] ? 0.0 : d2[i];
    std::size_t pick = n;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i]) continue;
        r -= d2[i];
        pick = i;
        if (r < 0.0) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i)
        if (!chosen[i]) pick = i;
    }
    chosen[pick] = true;
    m.centroids[c] = vectors[pick].values;
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(vectors[i].values, m.centroids[c]));
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < std::max(max_iters, 1); ++iter) {
    bool changed = false;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = detail::nearest(m.centroids, vectors[i].values);
      changed = changed || c != assign[i];
      assign[i] = c;
      sse += squared_distance(vectors[i].values, m.centroids[static_cast<std::size_t>(c)]);
    }
    m.objective_history.push_back(sse);
    if (!changed) break;

    std::vector<Vector> sums(kk, Vector(dim, 0.0));
    std::vector<std::size_t> counts(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[static_cast<std::size_t>(assign[i])];
      for (std::size_t d = 0; d < dim; ++d) s[d] += vectors[i].values[d];
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    for (std::size_t c = 0; c < kk; ++c)
      if (counts[c] > 0) {
        for (double& x : sums[c]) x /= static_cast<double>(counts[c]);
        m.centroids[c] = std::move(sums[c]);
      }
    // Re-seed each empty cluster with the point farthest from its centroid,
    // taken from a cluster that can spare it.
    for (std::size_t c = 0; c < kk; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = n;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto home = static_cast<std::size_t>(assign[i]);
        if (counts[home] < 2) continue;
        const double d = squared_distance(vectors[i].values, m.centroids[home]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) continue;
      --counts[static_cast<std::size_t>(assign[far])];
      assign[far] = static_cast<int>(c);
      counts[c] = 1;
      m.centroids[c] = vectors[far].values;
    }
  }

  for (std::size_t i = 0; i < n; ++i) m.assignment[vectors[i].item_id] = assign[i];
  detail::fill_members(m, vectors);
  return m;
}

struct RoundRobinState {
  std::vector<int> cluster_order;
  std::size_t cursor = 0;
  std::set<std::string> used;

  /// Clusters visited in ascending index order.
  static RoundRobinState start(const ClusterModel& m) {
    RoundRobinState s;
    for (int c = 0; c < static_cast<int>(m.members.size()); ++c) s.cluster_order.push_back(c);
    return s;
  }

  /// Rebuilds the state reached after issuing `issued` (in order). Each pick
  /// leaves the cursor one past the picked cluster, so the last pick fixes it.
  static RoundRobinState resume(const ClusterModel& m, std::span<const std::string> issued) {
    RoundRobinState s = start(m);
    for (const auto& id : issued) s.used.insert(id);
    if (!issued.empty() && !s.cluster_order.empty()) {
      const auto it = m.assignment.find(issued.back());
      if (it != m.assignment.end()) {
        const auto pos = std::find(s.cluster_order.begin(), s.cluster_order.end(), it->second) - s.cluster_order.begin();
        s.cursor = (static_cast<std::size_t>(pos) + 1) % s.cluster_order.size();
      }
    }
    return s;
  }
};

/// Next item in cluster round-robin: clusters with nothing left are skipped,
/// and within a cluster the unused item nearest the centroid is taken.
inline std::string next_diverse(RoundRobinState& state, const ClusterModel& m) {
  const std::size_t n = state.cluster_order.size();
  for (std::size_t step = 0; step < n; ++step) {
    const auto c = static_cast<std::size_t>(state.cluster_order[state.cursor]);
    state.cursor = (state.cursor + 1) % n;
    for (const auto& id : m.members.at(c))
      if (!state.used.count(id)) {
        state.used.insert(id);
        return id;
      }
  }
  throw Error(Errc::pool_exhausted, "every pool item has been used");
}

/// Farthest-point traversal from `start`; ties go to the lowest index.
/// Returns indices in selection order.
inline std::vector<std::size_t> farthest_point_order(std::span<const EmbeddingVector> vectors, std::size_t target,
                                                     std::size_t start) {
  const std::size_t n = vectors.size();
  std::vector<std::size_t> out;
  if (n == 0 || target == 0) return out;
  if (start >= n) throw Error(Errc::invalid_argument, "start index out of range");
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  std::size_t next = start;
  while (out.size() < std::min(target, n)) {
    out.push_back(next);
    taken[next] = true;
    for (std::size_t i = 0; i < n; ++i) dist[i] = std::min(dist[i], squared_distance(vectors[i].values, vectors[next].values));
    double best = -1.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i] && dist[i] > best) {
        best = dist[i];
        next = i;
      }
  }
  return out;
}

/// Farthest-point pre-filter from an explicit start index.
inline std::vector<PoolItem> prefilter_from(std::span<const PoolItem> pool, std::size_t target_size, Embedder& embedder,
                                            std::size_t start) {
  if (target_size < 1) throw Error(Errc::invalid_argument, "target_size must be >= 1");
  if (pool.empty()) return {};
  const auto vectors = embed_pool(pool, embedder);
  std::vector<PoolItem> out;
  for (auto i : farthest_point_order(vectors, target_size, start)) out.push_back(pool[i]);
  return out;
}

/// Diversity pre-filter down to at most `target_size` items, starting from a
/// seed-chosen item. Order of the result is the selection order.
inline std::vector<PoolItem> prefilter(std::span<const PoolItem> pool, std::size_t target_size, Embedder& embedder,
                                       std::uint64_t seed) {
  if (target_size < 1) throw Error(Errc::invalid_argument, "target_size must be >= 1");
  if (pool.empty()) return {};
  gate::detail::Rng rng(gate::detail::mix(seed, 0x70726566ULL));
  return prefilter_from(pool, target_size, embedder, static_cast<std::size_t>(rng.below(pool.size())));
}

// ---------------------------------------------------------------------------
// JSON for the cluster model artifact.

inline void to_json(nlohmann::json& j, const ClusterModel& m) {
  j = {{"schema_version", kSchemaVersion},
       {"k", m.k},
       {"centroids", m.centroids},
       {"assignment", m.assignment},
       {"members", m.members},
       {"objective_history", m.objective_history}};
}

inline void from_json(const nlohmann::json& j, ClusterModel& m) {
  if (j.value("schema_version", 0) != kSchemaVersion)
    throw Error(Errc::version_mismatch, "unsupported cluster model schema_version");
  m.k = j.at("k").get<int>();
  m.centroids = j.at("centroids").get<std::vector<Vector>>();
  m.assignment = j.at("assignment").get<std::map<std::string, int>>();
  m.members = j.at("members").get<std::vector<std::vector<std::string>>>();
  m.objective_history = j.value("objective_history", std::vector<double>{});
}

}  // namespace gate::pool
