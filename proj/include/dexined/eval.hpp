#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <tuple>
#include <string>
#include <utility>
#include <vector>

#include "dexined/error.hpp"
#include "dexined/parallel.hpp"

namespace dexined::eval {

struct BinaryMap {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMap() = default;
  BinaryMap(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t& operator()(std::size_t y, std::size_t x) { return bits[y * width + x]; }
  std::uint8_t operator()(std::size_t y, std::size_t x) const { return bits[y * width + x]; }
  std::size_t count() const { return std::size_t(std::count(bits.begin(), bits.end(), 1)); }
  friend bool operator==(const BinaryMap&, const BinaryMap&) = default;
};

// Edge probabilities in [0,1], row-major.
struct EdgeMap {
  std::size_t height = 0, width = 0;
  std::vector<float> values;
};

enum class Matcher { greedy, optimal };

inline const char* to_string(Matcher m) { return m == Matcher::greedy ? "greedy" : "optimal"; }

inline Matcher parse_matcher(const std::string& s) {
  if (s == "greedy") return Matcher::greedy;
  if (s == "optimal") return Matcher::optimal;
  throw ConfigError("unknown matcher '" + s + "' (expected greedy or optimal)");
}

inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 99; ++i) t.push_back(i / 100.0);
  return t;
}

struct EvalConfig {
  std::vector<double> thresholds = default_thresholds();
  double max_dist = 0.0075;  // fraction of the image diagonal
  bool thinning = true;
  Matcher matcher = Matcher::greedy;

  void validate() const {
    if (thresholds.empty()) throw ConfigError("eval: no thresholds");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
      if (!(thresholds[i] > 0 && thresholds[i] < 1))
        throw ConfigError("eval: thresholds must lie in (0, 1)");
      if (i && !(thresholds[i] > thresholds[i - 1]))
        throw ConfigError("eval: thresholds must be strictly increasing");
    }
    if (!(max_dist > 0)) throw ConfigError("eval: max_dist must be positive");
  }
};

// Zhang-Suen two-subiteration thinning, run to convergence. Pixels outside
// the map count as background.
inline BinaryMap thin(BinaryMap map) {
  const std::size_t h = map.height, w = map.width;
  auto px = [&](long y, long x) -> int {
    return (y < 0 || x < 0 || y >= long(h) || x >= long(w)) ? 0 : map(y, x);
  };
  std::vector<std::size_t> doomed;
  for (bool changed = true; changed;) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      doomed.clear();
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          if (!map(y, x)) continue;
          const long Y = long(y), X = long(x);
          // clockwise from north
          const int n[8] = {px(Y - 1, X),     px(Y - 1, X + 1), px(Y, X + 1), px(Y + 1, X + 1),
                            px(Y + 1, X),     px(Y + 1, X - 1), px(Y, X - 1), px(Y - 1, X - 1)};
          int b = 0, a = 0;
          for (int k = 0; k < 8; ++k) {
            b += n[k];
            a += (n[k] == 0 && n[(k + 1) % 8] == 1);
          }
          if (b < 2 || b > 6 || a != 1) continue;
          const bool keep = pass == 0 ? (n[0] * n[2] * n[4] != 0 || n[2] * n[4] * n[6] != 0)
                                      : (n[0] * n[2] * n[6] != 0 || n[0] * n[4] * n[6] != 0);
          if (!keep) doomed.push_back(y * w + x);
        }
      for (std::size_t i : doomed) map.bits[i] = 0;
      changed |= !doomed.empty();
    }
  }
  return map;
}

struct Pixel {
  int y = 0, x = 0;
};

inline std::vector<Pixel> edge_pixels(const BinaryMap& m) {
  std::vector<Pixel> out;
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m(y, x)) out.push_back({int(y), int(x)});
  return out;
}

struct Correspondence {
  std::vector<std::uint8_t> pred_matched;  // per predicted edge pixel, row-major order
  std::vector<std::uint8_t> gt_matched;    // per gt edge pixel, row-major order
  std::size_t matches = 0;
  double cost = 0;  // summed distance of the matched pairs
};

namespace detail {

// Bipartite candidate graph between pixel lists, edges within radius.
struct Candidates {
  std::vector<std::vector<std::pair<int, double>>> adj;  // pred -> (gt, distance)
};

inline Candidates candidates(const std::vector<Pixel>& pred, const std::vector<Pixel>& gt,
                             std::size_t h, std::size_t w, double radius) {
  std::vector<int> gt_index(h * w, -1);
  for (std::size_t j = 0; j < gt.size(); ++j) gt_index[gt[j].y * w + gt[j].x] = int(j);
  const int reach = int(std::floor(radius));
  const double r2 = radius * radius;
  Candidates c;
  c.adj.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (int dy = -reach; dy <= reach; ++dy)
      for (int dx = -reach; dx <= reach; ++dx) {
        const int y = pred[i].y + dy, x = pred[i].x + dx;
        if (y < 0 || x < 0 || y >= int(h) || x >= int(w)) continue;
        const int d2 = dy * dy + dx * dx;
        if (d2 > r2) continue;
        const int j = gt_index[y * w + x];
        if (j >= 0) c.adj[i].push_back({j, std::sqrt(double(d2))});
      }
  return c;
}

// Grows a matching to maximum cardinality with Hopcroft-Karp phases.
inline void augment_to_maximum(const Candidates& c, std::vector<int>& pred_to_gt,
                               std::vector<int>& gt_to_pred) {
  const std::size_t np = pred_to_gt.size();
  constexpr int inf = std::numeric_limits<int>::max();
  std::vector<int> dist(np);
  std::vector<std::size_t> edge_cursor(np);
  for (;;) {
    // BFS layers from free predictions over alternating paths
    std::queue<int> q;
    for (std::size_t u = 0; u < np; ++u) {
      dist[u] = pred_to_gt[u] < 0 ? 0 : inf;
      if (!dist[u]) q.push(int(u));
    }
    bool found = false;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (const auto& [v, d] : c.adj[u]) {
        const int nu = gt_to_pred[v];
        if (nu < 0) {
          found = true;
        } else if (dist[nu] == inf) {
          dist[nu] = dist[u] + 1;
          q.push(nu);
        }
      }
    }
    if (!found) return;
    // DFS along the layers, iteratively
    std::fill(edge_cursor.begin(), edge_cursor.end(), 0);
    for (std::size_t root = 0; root < np; ++root) {
      if (pred_to_gt[root] >= 0) continue;
      std::vector<int> stack = {int(root)};
      while (!stack.empty()) {
        const int u = stack.back();
        if (edge_cursor[u] == c.adj[u].size()) {
          dist[u] = inf;  // dead end for this phase
          stack.pop_back();
          continue;
        }
        const int v = c.adj[u][edge_cursor[u]++].first;
        const int nu = gt_to_pred[v];
        if (nu < 0) {
          // flip the path: each stacked pred takes the gt it advanced through
          int gt_v = v;
          for (std::size_t k = stack.size(); k-- > 0;) {
            const int p = stack[k];
            const int prev = pred_to_gt[p];
            pred_to_gt[p] = gt_v;
            gt_to_pred[gt_v] = p;
            gt_v = prev;
          }
          break;
        }
        if (dist[nu] == dist[u] + 1) stack.push_back(nu);
      }
    }
  }
}

// Min-cost maximum matching by successive shortest augmenting paths with
// Johnson potentials.
inline void min_cost_maximum(const Candidates& c, std::size_t n_gt, std::vector<int>& pred_to_gt,
                             std::vector<int>& gt_to_pred) {
  const std::size_t np = c.adj.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pot_p(np, 0), pot_g(n_gt, 0), dist_p(np), dist_g(n_gt);
  std::vector<int> parent_g(n_gt);
  using Item = std::pair<double, int>;  // (distance, node); node >= 0 pred, < 0 gt as ~j
  for (;;) {
    std::fill(dist_p.begin(), dist_p.end(), inf);
    std::fill(dist_g.begin(), dist_g.end(), inf);
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    for (std::size_t u = 0; u < np; ++u)
      if (pred_to_gt[u] < 0 && !c.adj[u].empty()) {
        dist_p[u] = 0;
        pq.push({0.0, int(u)});
      }
    while (!pq.empty()) {
      auto [d, node] = pq.top();
      pq.pop();
      if (node >= 0) {
        if (d > dist_p[node]) continue;
        for (const auto& [v, cost] : c.adj[node]) {
          if (pred_to_gt[node] == v) continue;
          const double nd = d + cost + pot_p[node] - pot_g[v];
          if (nd < dist_g[v]) {
            dist_g[v] = nd;
            parent_g[v] = node;
            pq.push({nd, ~v});
          }
        }
      } else {
        const int v = ~node;
        if (d > dist_g[v]) continue;
        const int u = gt_to_pred[v];
        if (u < 0) continue;
        double cost = 0;
        for (const auto& [g, cst] : c.adj[u])
          if (g == v) cost = cst;
        const double nd = d - cost + pot_g[v] - pot_p[u];
        if (nd < dist_p[u]) {
          dist_p[u] = nd;
          pq.push({nd, u});
        }
      }
    }
    int best = -1;
    for (std::size_t v = 0; v < n_gt; ++v)
      if (gt_to_pred[v] < 0 && dist_g[v] < inf && (best < 0 || dist_g[v] < dist_g[best]))
        best = int(v);
    if (best < 0) return;
    // capping at the sink distance keeps every reduced cost non-negative,
    // including edges at nodes the search did not reach
    const double cap = dist_g[best];
    for (std::size_t u = 0; u < np; ++u) pot_p[u] += std::min(dist_p[u], cap);
    for (std::size_t v = 0; v < n_gt; ++v) pot_g[v] += std::min(dist_g[v], cap);
    for (int v = best; v >= 0;) {
      const int u = parent_g[v];
      const int prev = pred_to_gt[u];
      pred_to_gt[u] = v;
      gt_to_pred[v] = u;
      v = prev;
    }
  }
}

}  // namespace detail

// One-to-one matching of predicted to ground-truth edge pixels whose
// Euclidean distance is at most max_dist_px.
//
// greedy: accept candidate pairs nearest-first (ties by pred then gt index),
// then extend along augmenting paths. Greedy acceptance alone is not
// cardinality-optimal, so the completion step makes the match count equal to
// the maximum bipartite matching.
// optimal: minimum total distance among maximum matchings.
inline Correspondence correspond(const BinaryMap& pred, const BinaryMap& gt, double max_dist_px,
                                 Matcher matcher = Matcher::greedy) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ShapeError("correspond: prediction " + std::to_string(pred.height) + "x" +
                     std::to_string(pred.width) + " vs ground truth " + std::to_string(gt.height) +
                     "x" + std::to_string(gt.width));
  const auto pp = edge_pixels(pred), gp = edge_pixels(gt);
  const auto cand = detail::candidates(pp, gp, pred.height, pred.width, max_dist_px);
  std::vector<int> p2g(pp.size(), -1), g2p(gp.size(), -1);
  if (matcher == Matcher::greedy) {
    struct Pair {
      double d;
      int p, g;
    };
    std::vector<Pair> pairs;
    for (std::size_t i = 0; i < pp.size(); ++i)
      for (const auto& [j, d] : cand.adj[i]) pairs.push_back({d, int(i), j});
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      return std::tie(a.d, a.p, a.g) < std::tie(b.d, b.p, b.g);
    });
    for (const Pair& q : pairs)
      if (p2g[q.p] < 0 && g2p[q.g] < 0) {
        p2g[q.p] = q.g;
        g2p[q.g] = q.p;
      }
    detail::augment_to_maximum(cand, p2g, g2p);
  } else {
    detail::min_cost_maximum(cand, gp.size(), p2g, g2p);
  }
  Correspondence c;
  c.pred_matched.assign(pp.size(), 0);
  c.gt_matched.assign(gp.size(), 0);
  for (std::size_t i = 0; i < pp.size(); ++i) {
    if (p2g[i] < 0) continue;
    c.pred_matched[i] = 1;
    c.gt_matched[p2g[i]] = 1;
    ++c.matches;
    const Pixel a = pp[i], b = gp[p2g[i]];
    c.cost += std::hypot(double(a.y - b.y), double(a.x - b.x));
  }
  return c;
}

struct PRCounts {
  std::size_t tp_pred = 0, n_pred = 0, tp_gt = 0, n_gt = 0;

  PRCounts& operator+=(const PRCounts& o) {
    tp_pred += o.tp_pred;
    n_pred += o.n_pred;
    tp_gt += o.tp_gt;
    n_gt += o.n_gt;
    return *this;
  }
  double precision() const { return n_pred ? double(tp_pred) / double(n_pred) : 0.0; }
  double recall() const { return n_gt ? double(tp_gt) / double(n_gt) : 0.0; }
};

// One entry per threshold.
using PRRecords = std::vector<PRCounts>;

inline double f_measure(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

inline BinaryMap binarize(const EdgeMap& m, double threshold) {
  BinaryMap b(m.height, m.width);
  for (std::size_t i = 0; i < m.values.size(); ++i) b.bits[i] = m.values[i] >= threshold;
  return b;
}

// Per-threshold counts of one image against one or more annotations. A
// predicted pixel is a hit if any annotation matches it; recall counts pool
// over annotations.
inline PRRecords sweep(const EdgeMap& map, const std::vector<BinaryMap>& gts, const EvalConfig& cfg) {
  cfg.validate();
  if (gts.empty()) throw DataError("sweep: no ground-truth annotation");
  for (const auto& g : gts)
    if (g.height != map.height || g.width != map.width)
      throw ShapeError("sweep: edge map " + std::to_string(map.height) + "x" +
                       std::to_string(map.width) + " vs ground truth " + std::to_string(g.height) +
                       "x" + std::to_string(g.width));
  const double radius =
      cfg.max_dist * std::sqrt(double(map.height * map.height + map.width * map.width));
  PRRecords out;
  for (double t : cfg.thresholds) {
    BinaryMap b = binarize(map, t);
    if (cfg.thinning) b = thin(std::move(b));
    PRCounts c;
    std::vector<std::uint8_t> hit;
    for (const auto& g : gts) {
      const Correspondence m = correspond(b, g, radius, cfg.matcher);
      if (hit.empty()) hit.assign(m.pred_matched.size(), 0);
      for (std::size_t i = 0; i < hit.size(); ++i) hit[i] |= m.pred_matched[i];
      c.tp_gt += m.matches;
      c.n_gt += m.gt_matched.size();
    }
    c.n_pred = hit.size();
    c.tp_pred = std::size_t(std::count(hit.begin(), hit.end(), 1));
    out.push_back(c);
  }
  return out;
}

struct CurvePoint {
  double threshold = 0, precision = 0, recall = 0, f = 0;
};

struct EvalSummary {
  double ods = 0, ois = 0, ap = 0;
  double ods_threshold = 0;
  // pooled F at each image's individually best-F threshold
  double ois_image_best = 0;
  std::size_t n_images = 0;
  std::vector<CurvePoint> pr_curve;
};

namespace detail {

inline double pooled_f(const PRCounts& c) { return f_measure(c.precision(), c.recall()); }

inline PRCounts minus(PRCounts a, const PRCounts& b) {
  a.tp_pred -= b.tp_pred;
  a.n_pred -= b.n_pred;
  a.tp_gt -= b.tp_gt;
  a.n_gt -= b.n_gt;
  return a;
}

// Per-image threshold indices chosen to maximize the pooled F. Starts from
// the better of the per-image-best and the common best threshold, then
// improves one image at a time in a content-defined order until no single
// change helps, so the result never falls below either starting point and
// does not depend on the order images were supplied in.
inline std::vector<std::size_t> optimal_image_thresholds(const std::vector<PRRecords>& records,
                                                         const std::vector<std::size_t>& image_best,
                                                         std::size_t common_best) {
  const std::size_t n = records.size(), nt = records.front().size();
  auto pool = [&](const std::vector<std::size_t>& pick) {
    PRCounts p;
    for (std::size_t i = 0; i < n; ++i) p += records[i][pick[i]];
    return p;
  };
  std::vector<std::size_t> pick = image_best;
  const std::vector<std::size_t> common(n, common_best);
  if (pooled_f(pool(common)) > pooled_f(pool(pick))) pick = common;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto key = [&](std::size_t i) {
    std::vector<std::size_t> k;
    for (const auto& c : records[i]) k.insert(k.end(), {c.tp_pred, c.n_pred, c.tp_gt, c.n_gt});
    return k;
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  PRCounts total = pool(pick);
  for (bool improved = true; improved;) {
    improved = false;
    for (std::size_t i : order) {
      const PRCounts rest = minus(total, records[i][pick[i]]);
      double best_f = pooled_f(total);
      for (std::size_t t = 0; t < nt; ++t) {
        PRCounts cand = rest;
        cand += records[i][t];
        if (pooled_f(cand) > best_f + 1e-15) {
          best_f = pooled_f(cand);
          pick[i] = t;
          total = cand;
          improved = true;
        }
      }
    }
  }
  return pick;
}

}  // namespace detail

// ODS: best F of dataset-pooled counts over thresholds. OIS: F of counts
// pooled with a separate threshold per image, the thresholds chosen to
// maximize that pooled F (so OIS >= ODS). AP: mean of interpolated precision
// over recall 0, 0.01, ..., 1.
inline EvalSummary summarize(const std::vector<PRRecords>& records, const EvalConfig& cfg) {
  cfg.validate();
  if (records.empty()) throw DataError("summarize: empty dataset");
  const std::size_t nt = cfg.thresholds.size();
  for (const auto& r : records)
    if (r.size() != nt) throw ShapeError("summarize: record length differs from threshold count");
  EvalSummary s;
  s.n_images = records.size();
  std::vector<PRCounts> pooled(nt);
  for (const auto& r : records)
    for (std::size_t t = 0; t < nt; ++t) pooled[t] += r[t];
  std::size_t common_best = 0;
  for (std::size_t t = 0; t < nt; ++t) {
    const double p = pooled[t].precision(), r = pooled[t].recall();
    s.pr_curve.push_back({cfg.thresholds[t], p, r, f_measure(p, r)});
    if (s.pr_curve.back().f > s.ods) {
      s.ods = s.pr_curve.back().f;
      s.ods_threshold = cfg.thresholds[t];
      common_best = t;
    }
  }
  std::vector<std::size_t> image_best(records.size(), 0);
  PRCounts best_pool;
  for (std::size_t i = 0; i < records.size(); ++i) {
    double best_f = -1;
    for (std::size_t t = 0; t < nt; ++t) {
      const double f = detail::pooled_f(records[i][t]);
      if (f > best_f) best_f = f, image_best[i] = t;
    }
    best_pool += records[i][image_best[i]];
  }
  s.ois_image_best = detail::pooled_f(best_pool);
  const auto pick = detail::optimal_image_thresholds(records, image_best, common_best);
  PRCounts ois_pool;
  for (std::size_t i = 0; i < records.size(); ++i) ois_pool += records[i][pick[i]];
  s.ois = detail::pooled_f(ois_pool);
  double area = 0;
  for (int k = 0; k <= 100; ++k) {
    const double level = k / 100.0;
    double p = 0;
    for (const auto& c : s.pr_curve)
      if (c.recall >= level - 1e-12) p = std::max(p, c.precision);
    area += p;
  }
  s.ap = area / 101.0;
  return s;
}

// Sweeps every image (in parallel) and summarizes. gts[i] holds the
// annotations of maps[i].
inline EvalSummary evaluate(const std::vector<EdgeMap>& maps,
                            const std::vector<std::vector<BinaryMap>>& gts, const EvalConfig& cfg,
                            std::size_t workers = 1) {
  if (maps.size() != gts.size())
    throw DataError("evaluate: " + std::to_string(maps.size()) + " edge maps for " +
                    std::to_string(gts.size()) + " ground truths");
  std::vector<PRRecords> records(maps.size());
  parallel_for(maps.size(), workers, [&](std::size_t i) { records[i] = sweep(maps[i], gts[i], cfg); });
  return summarize(records, cfg);
}

}  // namespace dexined::eval
