#pragma once

// Speaker clustering of embedding windows: cosine affinity, auto-tuned
// spectral clustering (normalized maximum eigengap), and average-linkage AHC.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ppmet/error.hpp"
#include "ppmet/ingest.hpp"
#include "ppmet/rng.hpp"
#include "ppmet/timeline.hpp"
#include "ppmet/types.hpp"

namespace ppmet {

struct AffinityMatrix {
  Eigen::MatrixXd values;

  Eigen::Index size() const { return values.rows(); }
};

struct TuningTrace {
  int p = 0;
  double ratio = 0.0;  // (p / n) / g_p; +inf when g_p = 0
  int best_k = 0;
  std::vector<double> eigengaps;
};

struct ClusteringResult {
  int k = 0;
  std::vector<int> labels;
  std::vector<TuningTrace> diagnostics;

  friend bool operator==(const ClusteringResult& a, const ClusteringResult& b) {
    if (a.k != b.k || a.labels != b.labels || a.diagnostics.size() != b.diagnostics.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.diagnostics.size(); ++i) {
      const auto& x = a.diagnostics[i];
      const auto& y = b.diagnostics[i];
      if (x.p != y.p || x.best_k != y.best_k || x.eigengaps != y.eigengaps) return false;
      if (x.ratio != y.ratio && !(std::isinf(x.ratio) && std::isinf(y.ratio))) return false;
    }
    return true;
  }
};

struct NmeScOptions {
  std::vector<int> p_candidates;  // empty: 1 .. min(n-1, ceil(n/2))
  int k_max = 8;
  std::uint64_t seed = 0;
  int kmeans_restarts = 10;
  int kmeans_iterations = 300;
};

inline AffinityMatrix cosine_affinity(const EmbeddingSequence& emb) {
  const auto n = static_cast<Eigen::Index>(emb.records.size());
  if (n == 0) throw Error(ErrorKind::kEmpty, "cosine_affinity: no embeddings");
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(emb.dim));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& v = emb.records[static_cast<std::size_t>(i)].vector;
    if (v.size() != emb.dim) throw RecordError(ErrorKind::kDimMismatch, "dim mismatch at record " + std::to_string(i), static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < v.size(); ++k) x(i, static_cast<Eigen::Index>(k)) = v[k];
    const double norm = x.row(i).norm();
    if (norm == 0.0) {
      throw RecordError(ErrorKind::kDegenerate, "zero-norm embedding at record " + std::to_string(i),
                        static_cast<std::size_t>(i));
    }
    x.row(i) /= norm;
  }
  AffinityMatrix a{x * x.transpose()};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = std::clamp(0.5 * (a.values(i, j) + a.values(j, i)), -1.0, 1.0);
      a.values(i, j) = v;
      a.values(j, i) = v;
    }
    a.values(i, i) = 1.0;
  }
  return a;
}

// Keeps the p strongest off-diagonal links of every row (ties to the lower
// column index), then symmetrizes with max(B, B^T).
inline Eigen::MatrixXd binarize_topp(const AffinityMatrix& a, int p) {
  const Eigen::Index n = a.size();
  if (p < 1 || p > n - 1) {
    throw Error(ErrorKind::kOutOfRange, "binarize_topp: p=" + std::to_string(p) +
                                            " outside [1, " + std::to_string(n - 1) + "]");
  }
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < n; ++i) {
    order.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    std::partial_sort(order.begin(), order.begin() + p, order.end(),
                      [&](Eigen::Index x, Eigen::Index y) {
                        const double vx = a.values(i, x), vy = a.values(i, y);
                        return vx != vy ? vx > vy : x < y;
                      });
    for (int k = 0; k < p; ++k) b(i, order[static_cast<std::size_t>(k)]) = 1.0;
    b(i, i) = 1.0;
  }
  return b.cwiseMax(b.transpose());
}

inline Eigen::MatrixXd laplacian(const Eigen::MatrixXd& b) {
  Eigen::MatrixXd l = -b;
  l.diagonal() += b.rowwise().sum();
  return l;
}

namespace detail {

// Ascending eigenvalues with tiny negatives (>= -1e-8, relative to scale)
// clipped to zero.
inline Eigen::VectorXd clipped_eigenvalues(const Eigen::VectorXd& raw, double scale) {
  Eigen::VectorXd lambda = raw;
  const double floor = -1e-8 * std::max(1.0, scale);
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (lambda(i) < floor) {
      throw Error(ErrorKind::kNumerical, "Laplacian eigenvalue " + std::to_string(lambda(i)) +
                                             " is negative");
    }
    if (lambda(i) < 0.0) lambda(i) = 0.0;
  }
  return lambda;
}

inline std::vector<double> eigengaps(const Eigen::VectorXd& lambda, int k_max) {
  const int n = static_cast<int>(lambda.size());
  const int kk = std::min(k_max, n - 1);
  std::vector<double> gaps;
  for (int k = 1; k <= kk; ++k) gaps.push_back(lambda(k) - lambda(k - 1));
  return gaps;
}

inline int argmax_first(const std::vector<double>& xs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(xs.size()); ++i) {
    if (xs[static_cast<std::size_t>(i)] > xs[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

inline std::vector<int> relabel_by_first_occurrence(const std::vector<int>& labels) {
  std::map<int, int> ids;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto [it, _] = ids.emplace(l, static_cast<int>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

struct KMeansFit {
  std::vector<int> labels;
  double inertia = std::numeric_limits<double>::infinity();
};

inline KMeansFit kmeans_once(const Eigen::MatrixXd& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());

  // k-means++ seeding
  centers.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (x.row(i) - centers.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target < 0.0 && d2(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
    }
    centers.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      d2(i) = std::min(d2(i), (x.row(i) - centers.row(c)).squaredNorm());
    }
  }

  KMeansFit fit;
  fit.labels.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (x.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (fit.labels[static_cast<std::size_t>(i)] != best) {
        fit.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = fit.labels[static_cast<std::size_t>(i)];
      sums.row(c) += x.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
      // An emptied cluster keeps its previous center.
      if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
  }
  fit.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    fit.inertia += (x.row(i) - centers.row(fit.labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return fit;
}

}  // namespace detail

// Lowest inertia over `restarts` k-means++ runs drawn from one seeded stream.
inline std::vector<int> kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int restarts = 10,
                               int max_iter = 300) {
  if (k <= 1) return std::vector<int>(static_cast<std::size_t>(x.rows()), 0);
  Rng rng(derive_seed(seed, "kmeans"));
  detail::KMeansFit best;
  for (int r = 0; r < restarts; ++r) {
    auto fit = detail::kmeans_once(x, k, rng, max_iter);
    if (fit.inertia < best.inertia) best = std::move(fit);
  }
  return best.labels;
}

namespace detail {

// Same direction up to rounding.
inline constexpr double kDuplicateAffinity = 1.0 - 1e-9;

// nme_sc on an affinity with no duplicate directions.
inline ClusteringResult nme_sc_distinct(const AffinityMatrix& a, const NmeScOptions& options) {
  const int n = static_cast<int>(a.size());
  ClusteringResult result;
  result.k = 1;
  result.labels.assign(static_cast<std::size_t>(n), 0);
  if (n == 1) return result;

  // With two windows every admissible p links the pair, so the spectrum
  // carries no information; split on cosine distance instead.
  if (n == 2) {
    if (a.values(0, 1) < 0.5) {
      result.k = 2;
      result.labels = {0, 1};
    }
    return result;
  }

  std::vector<int> candidates = options.p_candidates;
  if (candidates.empty()) {
    const int p_max = std::min(n - 1, (n + 1) / 2);
    for (int p = 1; p <= p_max; ++p) candidates.push_back(p);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  int best_index = -1;
  for (int p : candidates) {
    const Eigen::MatrixXd l = laplacian(binarize_topp(a, p));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(l, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
      throw Error(ErrorKind::kNumerical, "eigensolver failed at p=" + std::to_string(p));
    }
    const Eigen::VectorXd lambda = detail::clipped_eigenvalues(solver.eigenvalues(), n);
    TuningTrace trace;
    trace.p = p;
    trace.eigengaps = detail::eigengaps(lambda, options.k_max);
    trace.best_k = detail::argmax_first(trace.eigengaps) + 1;
    const double lambda_max = lambda(n - 1);
    const double g = lambda_max > 0.0
                         ? *std::max_element(trace.eigengaps.begin(), trace.eigengaps.end()) / lambda_max
                         : 0.0;
    trace.ratio = g > 0.0 ? (static_cast<double>(p) / n) / g
                          : std::numeric_limits<double>::infinity();
    result.diagnostics.push_back(trace);
    if (best_index < 0 || trace.ratio < result.diagnostics[static_cast<std::size_t>(best_index)].ratio) {
      best_index = static_cast<int>(result.diagnostics.size()) - 1;
    }
  }

  const auto& chosen = result.diagnostics[static_cast<std::size_t>(best_index)];
  if (std::isinf(chosen.ratio)) return result;
  const int k = chosen.best_k;
  if (k == 1) return result;

  const Eigen::MatrixXd l = laplacian(binarize_topp(a, chosen.p));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(l);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorKind::kNumerical, "eigensolver failed at p=" + std::to_string(chosen.p));
  }
  const Eigen::MatrixXd embedding = solver.eigenvectors().leftCols(k);
  result.labels = detail::relabel_by_first_occurrence(
      kmeans(embedding, k, options.seed, options.kmeans_restarts, options.kmeans_iterations));
  result.k = *std::max_element(result.labels.begin(), result.labels.end()) + 1;
  return result;
}

}  // namespace detail

// Windows pointing in exactly the same direction are clustered as one point:
// with duplicates the lower-column tie rule builds star graphs whose top
// eigengap swamps the cluster gap.
inline ClusteringResult nme_sc(const AffinityMatrix& a, const NmeScOptions& options = {}) {
  const int n = static_cast<int>(a.size());
  if (n == 0) throw Error(ErrorKind::kEmpty, "nme_sc: empty affinity");
  if (options.k_max < 1) throw Error(ErrorKind::kInvalidArgument, "nme_sc: k_max must be >= 1");

  std::vector<int> rep(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> distinct;
  for (int i = 0; i < n; ++i) {
    int r = -1;
    for (std::size_t u = 0; u < distinct.size() && r < 0; ++u) {
      if (a.values(i, distinct[u]) >= detail::kDuplicateAffinity) r = static_cast<int>(u);
    }
    if (r < 0) {
      r = static_cast<int>(distinct.size());
      distinct.push_back(i);
    }
    rep[static_cast<std::size_t>(i)] = r;
  }
  if (distinct.size() == static_cast<std::size_t>(n)) return detail::nme_sc_distinct(a, options);

  AffinityMatrix sub{a.values(distinct, distinct)};
  ClusteringResult inner = detail::nme_sc_distinct(sub, options);
  ClusteringResult result;
  result.diagnostics = std::move(inner.diagnostics);
  for (int i = 0; i < n; ++i) result.labels.push_back(inner.labels[static_cast<std::size_t>(rep[static_cast<std::size_t>(i)])]);
  result.labels = detail::relabel_by_first_occurrence(result.labels);
  result.k = *std::max_element(result.labels.begin(), result.labels.end()) + 1;
  return result;
}

// Average-linkage agglomeration on 1 - affinity; merges while the closest
// pair of clusters is nearer than `threshold`.
inline ClusteringResult ahc(const AffinityMatrix& a, double threshold) {
  const int n = static_cast<int>(a.size());
  ClusteringResult result;
  if (n == 0) return result;

  Eigen::MatrixXd dist = Eigen::MatrixXd::Ones(n, n) - a.values;
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<char> alive(static_cast<std::size_t>(n), 1);
  std::vector<int> owner(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) owner[static_cast<std::size_t>(i)] = i;

  for (int remaining = n; remaining > 1; --remaining) {
    double best = std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (alive[static_cast<std::size_t>(j)] && dist(i, j) < best) {
          best = dist(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (!(best < threshold)) break;

    const double si = size[static_cast<std::size_t>(bi)], sj = size[static_cast<std::size_t>(bj)];
    for (int m = 0; m < n; ++m) {
      if (!alive[static_cast<std::size_t>(m)] || m == bi || m == bj) continue;
      const double d = (si * dist(bi, m) + sj * dist(bj, m)) / (si + sj);
      dist(bi, m) = d;
      dist(m, bi) = d;
    }
    size[static_cast<std::size_t>(bi)] += size[static_cast<std::size_t>(bj)];
    alive[static_cast<std::size_t>(bj)] = 0;
    for (auto& o : owner) {
      if (o == bj) o = bi;
    }
  }

  result.labels = detail::relabel_by_first_occurrence(owner);
  result.k = *std::max_element(result.labels.begin(), result.labels.end()) + 1;
  return result;
}

inline std::string cluster_label(int id) { return "spk" + std::to_string(id); }

// Maps window labels back onto the time axis. Where consecutive windows with
// different labels overlap, the overlap is split at its midpoint.
inline Diarization labels_to_diarization(const ClusteringResult& result,
                                         const std::vector<Segment>& windows,
                                         const std::string& session) {
  if (windows.size() != result.labels.size()) {
    throw Error(ErrorKind::kDimMismatch, "labels_to_diarization: " +
                                             std::to_string(result.labels.size()) + " labels for " +
                                             std::to_string(windows.size()) + " windows");
  }
  std::vector<std::size_t> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return windows[x].onset < windows[y].onset;
  });

  std::vector<Segment> spans;
  for (std::size_t i : order) spans.push_back(windows[i]);
  for (std::size_t r = 0; r + 1 < order.size(); ++r) {
    const std::size_t i = order[r], j = order[r + 1];
    if (result.labels[i] == result.labels[j]) continue;
    if (windows[j].onset < windows[i].offset) {
      const double mid = 0.5 * (windows[j].onset + windows[i].offset);
      spans[r].offset = std::min(spans[r].offset, mid);
      spans[r + 1].onset = std::max(spans[r + 1].onset, mid);
    }
  }

  Diarization d{session, {}};
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (spans[r].offset - spans[r].onset > kTimeTol) {
      d.segments.push_back({spans[r], cluster_label(result.labels[order[r]])});
    }
  }
  return normalize(d);
}

inline std::string diagnostics_tsv(const ClusteringResult& result) {
  std::size_t width = 0;
  for (const auto& t : result.diagnostics) width = std::max(width, t.eigengaps.size());
  std::string out = "p\tr\tbest_k";
  for (std::size_t k = 1; k <= width; ++k) out += "\tgap_" + std::to_string(k);
  out += "\n";
  for (const auto& t : result.diagnostics) {
    out += std::to_string(t.p) + "\t" + (std::isinf(t.ratio) ? "inf" : detail::shortest(t.ratio)) +
           "\t" + std::to_string(t.best_k);
    for (double g : t.eigengaps) out += "\t" + detail::shortest(g);
    out += "\n";
  }
  return out;
}

}  // namespace ppmet
