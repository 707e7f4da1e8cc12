#include "moralprobe/cluster.hpp"

#include "moralprobe/error.hpp"
#include "moralprobe/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace moralprobe {

std::string_view to_string(ClusterAlgorithm a) { return a == ClusterAlgorithm::KMeans ? "kmeans" : "agglomerative"; }
std::string_view to_string(Linkage l) { return l == Linkage::Ward ? "ward" : "average"; }

Linkage linkage_from_string(std::string_view s) {
  if (s == "ward") return Linkage::Ward;
  if (s == "average") return Linkage::Average;
  throw ValidationError(fmt::format("unknown linkage '{}'", s));
}

void ClusterAssignment::validate() const {
  if (k < 1) throw ValidationError("cluster assignment with k < 1");
  if (!items.empty() && static_cast<Eigen::Index>(items.size()) != labels.size()) {
    throw ValidationError("cluster assignment: item and label counts differ");
  }
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw ValidationError(fmt::format("cluster label {} outside [0, {})", labels[i], k));
    }
  }
}

namespace {

std::vector<std::string> default_items(Eigen::Index n, std::vector<std::string> items) {
  if (items.empty()) {
    items.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) items.push_back(std::to_string(i));
  } else if (static_cast<Eigen::Index>(items.size()) != n) {
    throw ValidationError("item names do not match the number of points");
  }
  return items;
}

// Nearest center per point; ties go to the lower center index.
double assign_points(const Eigen::Ref<const Eigen::MatrixXd>& points, const Eigen::MatrixXd& centers,
                     Eigen::VectorXi& labels, Eigen::VectorXd& best_d2) {
  double inertia = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index c = 0; c < centers.rows(); ++c) {
      const double d2 = (points.row(i) - centers.row(c)).squaredNorm();
      if (d2 < best) {
        best = d2;
        arg = static_cast<int>(c);
      }
    }
    labels[i] = arg;
    best_d2[i] = best;
    inertia += best;
  }
  return inertia;
}

Eigen::MatrixXd kmeanspp_init(const Eigen::Ref<const Eigen::MatrixXd>& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centers(k, points.cols());
  centers.row(0) = points.row(static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(uniform_index(rng, static_cast<std::uint64_t>(n)));
    }
    centers.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

struct LloydResult {
  Eigen::VectorXi labels;
  double inertia = 0.0;
  std::vector<double> trace;
};

LloydResult lloyd(const Eigen::Ref<const Eigen::MatrixXd>& points, Eigen::MatrixXd centers, int max_iterations) {
  const Eigen::Index n = points.rows();
  const int k = static_cast<int>(centers.rows());
  LloydResult r;
  r.labels.resize(n);
  Eigen::VectorXd d2(n);
  r.inertia = assign_points(points, centers, r.labels, d2);
  r.trace.push_back(r.inertia);
  Eigen::VectorXi next(n);
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(r.labels[i]) += points.row(i);
      ++counts[r.labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        // Re-seed an empty cluster at the point farthest from its center.
        Eigen::Index far = 0;
        d2.maxCoeff(&far);
        centers.row(c) = points.row(far);
        d2[far] = 0.0;
      }
    }
    const double inertia = assign_points(points, centers, next, d2);
    r.trace.push_back(inertia);
    r.inertia = inertia;
    const bool fixpoint = next == r.labels;
    r.labels = next;
    if (fixpoint) break;
  }
  return r;
}

// Renumber labels by first appearance.
Eigen::VectorXi canonical_labels(const Eigen::VectorXi& labels) {
  std::map<int, int> remap;
  Eigen::VectorXi out(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = remap.try_emplace(labels[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return out;
}

int distinct_labels(const Eigen::VectorXi& labels) {
  std::set<int> s(labels.data(), labels.data() + labels.size());
  return static_cast<int>(s.size());
}

}  // namespace

ClusterAssignment kmeans(const Eigen::Ref<const Eigen::MatrixXd>& points, int k, const KMeansOptions& options,
                         std::vector<std::string> items) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw ValidationError("kmeans: k must be >= 1");
  if (n < k) throw ValidationError(fmt::format("kmeans: {} points cannot form {} clusters", n, k));
  if (!points.allFinite()) throw ValidationError("kmeans: non-finite input");

  ClusterAssignment best;
  best.items = default_items(n, std::move(items));
  best.k = k;
  best.algorithm = ClusterAlgorithm::KMeans;
  best.seed = options.seed;
  best.inertia = std::numeric_limits<double>::infinity();

  const int restarts = std::max(1, options.restarts);
  for (int r = 0; r < restarts; ++r) {
    std::mt19937_64 rng(splitmix64(options.seed ^ splitmix64(static_cast<std::uint64_t>(r))));
    auto run = lloyd(points, kmeanspp_init(points, k, rng), options.max_iterations);
    if (run.inertia < best.inertia) {
      best.inertia = run.inertia;
      best.labels = canonical_labels(run.labels);
      best.inertia_trace = std::move(run.trace);
    }
  }
  return best;
}

double silhouette(const Eigen::Ref<const Eigen::MatrixXd>& points, const Eigen::VectorXi& labels) {
  const Eigen::Index n = points.rows();
  if (labels.size() != n) throw ValidationError("silhouette: label count differs from point count");
  if (distinct_labels(labels) < 2) throw ValidationError("silhouette is undefined for fewer than 2 clusters");

  const int k = labels.maxCoeff() + 1;
  Eigen::VectorXi sizes = Eigen::VectorXi::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) ++sizes[labels[i]];

  double total = 0.0;
  Eigen::VectorXd dist_sum(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    dist_sum.setZero();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) dist_sum[labels[j]] += (points.row(i) - points.row(j)).norm();
    }
    const double a = dist_sum[labels[i]] / (sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c != labels[i] && sizes[c] > 0) b = std::min(b, dist_sum[c] / sizes[c]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

KSelection select_k_silhouette(const Eigen::Ref<const Eigen::MatrixXd>& points, int k_min, int k_max,
                               const KMeansOptions& options) {
  const auto n = static_cast<int>(points.rows());
  if (n < 3) throw ValidationError("silhouette K selection needs at least 3 points");
  KSelection sel;
  const int lo = std::max(k_min, 2);
  const int hi = std::min(k_max, n - 1);
  sel.flagged = lo != k_min || hi != k_max;
  if (lo > hi) throw ValidationError(fmt::format("empty K range [{}, {}] for {} points", k_min, k_max, n));
  double best = -std::numeric_limits<double>::infinity();
  for (int k = lo; k <= hi; ++k) {
    const auto a = kmeans(points, k, options);
    const double s = distinct_labels(a.labels) < 2 ? -1.0 : silhouette(points, a.labels);
    sel.curve.emplace_back(k, s);
    if (s > best) {
      best = s;
      sel.k = k;
    }
  }
  return sel;
}

double within_cluster_ss(const Eigen::Ref<const Eigen::MatrixXd>& points, const Eigen::VectorXi& labels) {
  if (labels.size() != points.rows()) throw ValidationError("within_cluster_ss: label count differs");
  const int k = labels.size() ? labels.maxCoeff() + 1 : 0;
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    sums.row(labels[i]) += points.row(i);
    counts[labels[i]] += 1.0;
  }
  double ss = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    ss += (points.row(i) - sums.row(labels[i]) / counts[labels[i]]).squaredNorm();
  }
  return ss;
}

ClusterAssignment agglomerative_1d(const Eigen::Ref<const Eigen::VectorXd>& values, int k, Linkage linkage,
                                   std::vector<std::string> items) {
  const Eigen::Index n = values.size();
  if (k < 1) throw ValidationError("agglomerative: k must be >= 1");
  if (n < k) throw ValidationError(fmt::format("agglomerative: {} values cannot form {} clusters", n, k));
  if (!values.allFinite()) throw ValidationError("agglomerative: non-finite input");

  std::vector<std::vector<Eigen::Index>> clusters(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) clusters[static_cast<std::size_t>(i)] = {i};

  auto mean_of = [&](const std::vector<Eigen::Index>& c) {
    double s = 0.0;
    for (auto i : c) s += values[i];
    return s / static_cast<double>(c.size());
  };
  auto distance = [&](const std::vector<Eigen::Index>& a, const std::vector<Eigen::Index>& b) {
    if (linkage == Linkage::Ward) {
      const double na = static_cast<double>(a.size());
      const double nb = static_cast<double>(b.size());
      const double d = mean_of(a) - mean_of(b);
      return na * nb / (na + nb) * d * d;  // increase in within-cluster SS
    }
    double s = 0.0;
    for (auto i : a) {
      for (auto j : b) s += std::fabs(values[i] - values[j]);
    }
    return s / static_cast<double>(a.size() * b.size());
  };

  while (static_cast<int>(clusters.size()) > k) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double d = distance(clusters[i], clusters[j]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    auto& target = clusters[bi];
    target.insert(target.end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(target.begin(), target.end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }

  // Number clusters by increasing mean, ties by smallest member index.
  std::sort(clusters.begin(), clusters.end(), [&](const auto& a, const auto& b) {
    const double ma = mean_of(a), mb = mean_of(b);
    if (ma != mb) return ma < mb;
    return a.front() < b.front();
  });

  ClusterAssignment out;
  out.items = default_items(n, std::move(items));
  out.k = k;
  out.algorithm = ClusterAlgorithm::Agglomerative;
  out.labels.resize(n);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (auto i : clusters[c]) out.labels[i] = static_cast<int>(c);
  }
  out.inertia = within_cluster_ss(values, out.labels);
  return out;
}

KSelection elbow_from_curve(std::span<const int> ks, std::span<const double> wcss) {
  if (ks.size() != wcss.size()) throw ValidationError("elbow: K and W(K) lengths differ");
  if (ks.size() < 3) throw ValidationError("elbow: needs at least 3 K values");
  KSelection sel;
  for (std::size_t i = 0; i < ks.size(); ++i) sel.curve.emplace_back(ks[i], wcss[i]);

  const double x0 = ks.front(), y0 = wcss.front();
  const double x1 = ks.back(), y1 = wcss.back();
  const double dx = x1 - x0, dy = y1 - y0;
  const double chord = std::hypot(dx, dy);
  double best = 0.0;
  sel.k = ks.front();
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double d = std::fabs(dy * ks[i] - dx * wcss[i] + x1 * y0 - y1 * x0) / chord;
    if (d > best) {
      best = d;
      sel.k = ks[i];
    }
  }
  double scale = 0.0;
  for (double w : wcss) scale = std::max(scale, std::fabs(w));
  if (best <= 1e-9 * std::max(scale, 1.0)) {
    sel.k = ks.front();
    sel.flagged = true;
  }
  return sel;
}

KSelection elbow_k(const Eigen::Ref<const Eigen::VectorXd>& values, int k_min, int k_max, Linkage linkage) {
  const auto n = static_cast<int>(values.size());
  const int lo = std::max(k_min, 1);
  const int hi = std::min(k_max, n - 1);
  if (hi - lo + 1 < 3) {
    throw ValidationError(fmt::format("elbow: K range [{}, {}] has fewer than 3 values for {} points", lo, hi, n));
  }
  std::vector<int> ks;
  std::vector<double> w;
  for (int k = lo; k <= hi; ++k) {
    ks.push_back(k);
    w.push_back(agglomerative_1d(values, k, linkage).inertia);
  }
  auto sel = elbow_from_curve(ks, w);
  if (lo != k_min || hi != k_max) sel.flagged = true;
  return sel;
}

namespace {

struct Contingency {
  Eigen::MatrixXd table;
  Eigen::VectorXd a;  // row sums
  Eigen::VectorXd b;  // column sums
  double n = 0.0;
};

Contingency contingency(const Eigen::VectorXi& x, const Eigen::VectorXi& y) {
  if (x.size() != y.size()) throw ValidationError("partitions have different sizes");
  std::map<int, int> rx, ry;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    rx.try_emplace(x[i], static_cast<int>(rx.size()));
    ry.try_emplace(y[i], static_cast<int>(ry.size()));
  }
  Contingency c;
  c.table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rx.size()), static_cast<Eigen::Index>(ry.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) c.table(rx[x[i]], ry[y[i]]) += 1.0;
  c.a = c.table.rowwise().sum();
  c.b = c.table.colwise().sum().transpose();
  c.n = static_cast<double>(x.size());
  return c;
}

double comb2(double v) { return v * (v - 1.0) / 2.0; }

double entropy(const Eigen::VectorXd& counts, double n) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0) {
      const double p = counts[i] / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

bool same_partition(const Contingency& c) {
  if (c.table.rows() != c.table.cols()) return false;
  for (Eigen::Index i = 0; i < c.table.rows(); ++i) {
    if ((c.table.row(i).array() > 0).count() != 1) return false;
  }
  for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
    if ((c.table.col(j).array() > 0).count() != 1) return false;
  }
  return true;
}

double expected_mutual_information(const Contingency& c) {
  const double n = c.n;
  const double lg_n = std::lgamma(n + 1.0);
  double emi = 0.0;
  for (Eigen::Index i = 0; i < c.a.size(); ++i) {
    const double ai = c.a[i];
    for (Eigen::Index j = 0; j < c.b.size(); ++j) {
      const double bj = c.b[j];
      const double lo = std::max(1.0, ai + bj - n);
      const double hi = std::min(ai, bj);
      const double lg_const = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(n - ai + 1.0) +
                              std::lgamma(n - bj + 1.0) - lg_n;
      for (double nij = lo; nij <= hi; nij += 1.0) {
        const double term = nij / n * std::log(n * nij / (ai * bj));
        const double lg_prob = lg_const - std::lgamma(nij + 1.0) - std::lgamma(ai - nij + 1.0) -
                               std::lgamma(bj - nij + 1.0) - std::lgamma(n - ai - bj + nij + 1.0);
        emi += term * std::exp(lg_prob);
      }
    }
  }
  return emi;
}

}  // namespace

double adjusted_rand_index(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  const auto c = contingency(a, b);
  if (c.n < 2) return 1.0;
  double index = 0.0;
  for (Eigen::Index i = 0; i < c.table.size(); ++i) index += comb2(c.table.data()[i]);
  double sum_a = 0.0, sum_b = 0.0;
  for (Eigen::Index i = 0; i < c.a.size(); ++i) sum_a += comb2(c.a[i]);
  for (Eigen::Index j = 0; j < c.b.size(); ++j) sum_b += comb2(c.b[j]);
  const double expected = sum_a * sum_b / comb2(c.n);
  const double max_index = (sum_a + sum_b) / 2.0;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

AmiResult adjusted_mutual_information(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  const auto c = contingency(a, b);
  AmiResult r;
  const bool trivial_a = c.a.size() <= 1;
  const bool trivial_b = c.b.size() <= 1;
  if (trivial_a || trivial_b) {
    r.flagged = true;
    r.value = (trivial_a && trivial_b) ? 1.0 : 0.0;
    return r;
  }
  if (same_partition(c)) {
    r.value = 1.0;
    return r;
  }
  double mi = 0.0;
  for (Eigen::Index i = 0; i < c.table.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.table.cols(); ++j) {
      const double nij = c.table(i, j);
      if (nij > 0) mi += nij / c.n * std::log(c.n * nij / (c.a[i] * c.b[j]));
    }
  }
  const double emi = expected_mutual_information(c);
  const double normalizer = (entropy(c.a, c.n) + entropy(c.b, c.n)) / 2.0;
  double denom = normalizer - emi;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  denom = denom < 0 ? std::min(denom, -eps) : std::max(denom, eps);
  r.value = (mi - emi) / denom;
  return r;
}

namespace {

void check_same_items(const ClusterAssignment& a, const ClusterAssignment& b) {
  if (a.items != b.items) throw ValidationError("cluster assignments cover different items");
}

}  // namespace

double ari(const ClusterAssignment& a, const ClusterAssignment& b) {
  check_same_items(a, b);
  return adjusted_rand_index(a.labels, b.labels);
}

AmiResult ami(const ClusterAssignment& a, const ClusterAssignment& b) {
  check_same_items(a, b);
  return adjusted_mutual_information(a.labels, b.labels);
}

ClusterPair most_differing_pair(const ClusterAssignment& assignment, const Eigen::Ref<const Eigen::VectorXd>& values) {
  if (assignment.k < 2) throw ValidationError("most_differing_pair needs k >= 2");
  if (values.size() != assignment.labels.size()) throw ValidationError("value count differs from label count");
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(assignment.k);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(assignment.k);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    sums[assignment.labels[i]] += values[i];
    counts[assignment.labels[i]] += 1.0;
  }
  if ((counts.array() == 0.0).any()) throw ValidationError("most_differing_pair: empty cluster");
  const Eigen::VectorXd means = sums.cwiseQuotient(counts);

  ClusterPair best;
  best.gap = -1.0;
  int ties = 0;
  for (int i = 0; i < assignment.k; ++i) {
    for (int j = i + 1; j < assignment.k; ++j) {
      const double gap = std::fabs(means[i] - means[j]);
      if (gap > best.gap) {
        best.first = i;
        best.second = j;
        best.gap = gap;
        ties = 0;
      } else if (gap == best.gap) {
        ++ties;
      }
    }
  }
  best.tie = ties > 0;
  return best;
}

}  // namespace moralprobe
