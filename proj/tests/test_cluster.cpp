#include "moralprobe/cluster.hpp"
#include "moralprobe/error.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace moralprobe;

namespace {

ClusterAssignment assignment(std::vector<std::string> items, Eigen::VectorXi labels, int k) {
  ClusterAssignment a;
  a.items = std::move(items);
  a.labels = std::move(labels);
  a.k = k;
  return a;
}

Eigen::VectorXi vec(std::initializer_list<int> v) {
  Eigen::VectorXi out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out[i++] = x;
  return out;
}

// Tight blobs around the given centres, `per` points each.
Eigen::MatrixXd blobs(const std::vector<Eigen::Vector2d>& centres, int per, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd p(static_cast<Eigen::Index>(centres.size()) * per, 2);
  Eigen::Index r = 0;
  for (const auto& c : centres) {
    for (int i = 0; i < per; ++i, ++r) {
      p(r, 0) = c.x() + spread * (uniform01(rng) - 0.5);
      p(r, 1) = c.y() + spread * (uniform01(rng) - 0.5);
    }
  }
  return p;
}

bool same_partition(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < a.size(); ++j) {
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    }
  }
  return true;
}

}  // namespace

TEST(KMeans, SingleClusterInertiaIsTotalSumOfSquares) {
  Eigen::MatrixXd p(4, 1);
  p << 0, 1, 2, 5;
  const auto a = kmeans(p, 1);
  EXPECT_TRUE((a.labels.array() == 0).all());
  EXPECT_NEAR(a.inertia, 4 + 1 + 0 + 9, 1e-12);
}

TEST(KMeans, SeparatedBlobs) {
  Eigen::MatrixXd p(4, 2);
  p << 0, 0, 0.1, 0, 10, 10, 10.1, 10;
  const auto a = kmeans(p, 2);
  EXPECT_EQ(a.labels[0], a.labels[1]);
  EXPECT_EQ(a.labels[2], a.labels[3]);
  EXPECT_NE(a.labels[0], a.labels[2]);
  a.validate();
}

TEST(KMeans, DeterministicForFixedSeed) {
  std::mt19937_64 rng(3);
  Eigen::MatrixXd p(20, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uniform01(rng);
  const auto a = kmeans(p, 3, {.seed = 11});
  const auto b = kmeans(p, 3, {.seed = 11});
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(KMeans, InertiaNonIncreasingAndFixpoint) {
  std::mt19937_64 rng(5);
  Eigen::MatrixXd p(60, 2);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = uniform01(rng);
  const auto a = kmeans(p, 4, {.restarts = 3, .seed = 9});
  ASSERT_GE(a.inertia_trace.size(), 2u);
  for (std::size_t i = 1; i < a.inertia_trace.size(); ++i) {
    EXPECT_LE(a.inertia_trace[i], a.inertia_trace[i - 1] + 1e-12);
  }
  // Fixpoint: every point is nearest to its own cluster mean.
  Eigen::MatrixXd centres = Eigen::MatrixXd::Zero(4, 2);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    centres.row(a.labels[i]) += p.row(i);
    counts[a.labels[i]] += 1;
  }
  for (int c = 0; c < 4; ++c) centres.row(c) /= counts[c];
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double own = (p.row(i) - centres.row(a.labels[i])).squaredNorm();
    for (int c = 0; c < 4; ++c) EXPECT_LE(own, (p.row(i) - centres.row(c)).squaredNorm() + 1e-12);
  }
  EXPECT_NEAR(a.inertia, within_cluster_ss(p, a.labels), 1e-9);
}

TEST(KMeans, PositiveRescalingKeepsPartition) {
  const auto p = blobs({{0, 0}, {3, 1}, {1, 4}}, 6, 1.5, 21);
  const auto a = kmeans(p, 3, {.seed = 4});
  const auto b = kmeans(p * 7.5, 3, {.seed = 4});
  EXPECT_TRUE(same_partition(a.labels, b.labels));
}

TEST(KMeans, Errors) {
  EXPECT_THROW(kmeans(Eigen::MatrixXd::Zero(2, 2), 3), ValidationError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 1);
  bad(1, 0) = NAN;
  EXPECT_THROW(kmeans(bad, 2), ValidationError);
}

TEST(Silhouette, HandEvaluatedExample) {
  Eigen::MatrixXd p(4, 1);
  p << 0, 0.1, 10, 10.1;
  // Outer points: a = 0.1, b = 10.05. Inner points: a = 0.1, b = 9.95.
  const double expected = ((10.05 - 0.1) / 10.05 + (9.95 - 0.1) / 9.95) / 2;
  EXPECT_NEAR(silhouette(p, vec({0, 0, 1, 1})), expected, 1e-12);
}

TEST(Silhouette, Conventions) {
  EXPECT_EQ(silhouette(Eigen::MatrixXd::Zero(4, 2), vec({0, 0, 1, 1})), 0.0);
  Eigen::MatrixXd p(3, 1);
  p << 0, 1, 5;
  // The singleton contributes 0; points 0 and 1: a = 1, b = 5 and 4.
  EXPECT_NEAR(silhouette(p, vec({0, 0, 1})), ((5.0 - 1) / 5 + (4.0 - 1) / 4) / 3, 1e-12);
  EXPECT_THROW(silhouette(p, vec({0, 0, 0})), ValidationError);
}

TEST(SelectK, ThreeBlobs) {
  const auto p = blobs({{0, 0}, {10, 0}, {0, 10}}, 5, 0.3, 2);
  const auto s = select_k_silhouette(p, 2, 10);
  EXPECT_EQ(s.k, 3);
  EXPECT_FALSE(s.flagged);
}

TEST(SelectK, TwoBlobsAndCollapsedRange) {
  const auto p = blobs({{0, 0}, {10, 10}}, 5, 0.3, 8);
  EXPECT_EQ(select_k_silhouette(p, 2, 5).k, 2);
  Eigen::MatrixXd three(3, 1);
  three << 0, 1, 3;
  const auto s = select_k_silhouette(three, 1, 10);
  EXPECT_EQ(s.k, 2);
  EXPECT_TRUE(s.flagged);
  EXPECT_THROW(select_k_silhouette(Eigen::MatrixXd::Zero(2, 1), 2, 2), ValidationError);
}

TEST(Agglomerative, SimpleSplitAndExtremes) {
  Eigen::Vector4d v(0.99, 0, 1.0, 0.01);
  const auto a = agglomerative_1d(v, 2);
  EXPECT_EQ(a.labels, vec({1, 0, 1, 0}));  // numbered by increasing mean
  const auto all = agglomerative_1d(v, 4);
  EXPECT_EQ(mptest::n_clusters(all.labels), 4);
  EXPECT_TRUE((agglomerative_1d(v, 1).labels.array() == 0).all());
  EXPECT_THROW(agglomerative_1d(v, 5), ValidationError);
}

TEST(Agglomerative, ClustersAreContiguousIntervals) {
  std::mt19937_64 rng(17);
  for (auto linkage : {Linkage::Ward, Linkage::Average}) {
    for (int trial = 0; trial < 30; ++trial) {
      Eigen::VectorXd v(25);
      for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = uniform01(rng);
      const int k = 2 + trial % 6;
      const auto a = agglomerative_1d(v, k, linkage);
      std::vector<Eigen::Index> order(25);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](auto x, auto y) { return v[x] < v[y]; });
      int changes = 0;
      for (std::size_t i = 1; i < order.size(); ++i) changes += a.labels[order[i]] != a.labels[order[i - 1]];
      EXPECT_EQ(changes, k - 1);
    }
  }
}

TEST(Elbow, ChordDistanceExample) {
  // Vertical gaps below the chord from (1,100) to (5,16): 59, 40, 20.
  const std::vector<int> ks{1, 2, 3, 4, 5};
  const std::vector<double> w{100, 20, 18, 17, 16};
  const auto s = elbow_from_curve(ks, w);
  EXPECT_EQ(s.k, 2);
  EXPECT_FALSE(s.flagged);
}

TEST(Elbow, LinearCurveIsFlagged) {
  const std::vector<int> ks{1, 2, 3, 4};
  const std::vector<double> w{40, 30, 20, 10};
  const auto s = elbow_from_curve(ks, w);
  EXPECT_EQ(s.k, 1);
  EXPECT_TRUE(s.flagged);
}

TEST(Elbow, ThreeSeparatedBlobs) {
  Eigen::VectorXd v(12);
  v << 0, 0.01, 0.02, 0.03, 0.5, 0.51, 0.52, 0.53, 1, 1.01, 1.02, 1.03;
  EXPECT_EQ(elbow_k(v, 1, 10).k, 3);
}

TEST(Elbow, NeedsThreeCandidates) {
  EXPECT_THROW(elbow_k(Eigen::Vector3d(0, 1, 2), 1, 10), ValidationError);
}

TEST(Ari, KnownValues) {
  EXPECT_DOUBLE_EQ(adjusted_rand_index(vec({0, 0, 1, 1}), vec({0, 1, 0, 1})), -0.5);
  EXPECT_EQ(adjusted_rand_index(vec({0, 0, 1, 1}), vec({5, 5, 2, 2})), 1.0);
  EXPECT_EQ(adjusted_rand_index(vec({0, 0, 0, 0}), vec({0, 1, 2, 3})), 0.0);
}

TEST(Ami, DegenerateCases) {
  const auto trivial = adjusted_mutual_information(vec({0, 0, 0, 0}), vec({0, 1, 0, 1}));
  EXPECT_EQ(trivial.value, 0.0);
  EXPECT_TRUE(trivial.flagged);
  const auto both = adjusted_mutual_information(vec({0, 0, 0}), vec({2, 2, 2}));
  EXPECT_EQ(both.value, 1.0);
  EXPECT_TRUE(both.flagged);
  const auto same = adjusted_mutual_information(vec({0, 1, 1, 2, 2}), vec({4, 3, 3, 0, 0}));
  EXPECT_EQ(same.value, 1.0);
  EXPECT_FALSE(same.flagged);
}

// Exhaustive: every pair of partitions of n items.
TEST(PartitionMetrics, MatchOraclesExhaustively) {
  for (int n = 1; n <= 5; ++n) {
    const auto parts = mptest::all_partitions(n);
    for (const auto& a : parts) {
      for (const auto& b : parts) {
        ASSERT_NEAR(adjusted_rand_index(a, b), mptest::ari_pair_counting(a, b), 1e-9);
        ASSERT_NEAR(adjusted_mutual_information(a, b).value, mptest::ami_enumeration(a, b), 1e-9);
      }
    }
  }
}

TEST(PartitionMetrics, SymmetricAndRelabelingInvariant) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXi a(12), b(12);
    for (int i = 0; i < 12; ++i) {
      a[i] = static_cast<int>(uniform_index(rng, 3));
      b[i] = static_cast<int>(uniform_index(rng, 4));
    }
    Eigen::VectorXi b2 = b.unaryExpr([](int x) { return 10 - x; });
    EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(b, a), 1e-12);
    EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(a, b2), 1e-12);
    EXPECT_NEAR(adjusted_mutual_information(a, b).value, adjusted_mutual_information(b, a).value, 1e-12);
    EXPECT_NEAR(adjusted_mutual_information(a, b).value, adjusted_mutual_information(a, b2).value, 1e-12);
  }
}

TEST(PartitionMetrics, AssignmentsMustCoverSameItems) {
  const auto a = assignment({"x", "y"}, vec({0, 1}), 2);
  const auto b = assignment({"x", "z"}, vec({0, 1}), 2);
  EXPECT_THROW(ari(a, b), ValidationError);
  EXPECT_THROW(ami(a, b), ValidationError);
  EXPECT_EQ(ari(a, a), 1.0);
}

TEST(Cas, ArithmeticMean) {
  EXPECT_EQ(cas(1, 1), 1.0);
  EXPECT_NEAR(cas(0.291, 0.138), 0.2145, 1e-12);
  EXPECT_NEAR(cas(-0.012, -0.002), -0.007, 1e-12);
}

TEST(MostDifferingPair, PicksExtremes) {
  const auto a = assignment({"a", "b", "c", "d"}, vec({0, 1, 2, 2}), 3);
  const auto p = most_differing_pair(a, Eigen::Vector4d(-0.8, 0.1, 0.6, 0.8));
  EXPECT_EQ(p.first, 0);
  EXPECT_EQ(p.second, 2);
  EXPECT_NEAR(p.gap, 1.5, 1e-12);
  EXPECT_FALSE(p.tie);
}

TEST(MostDifferingPair, EqualMeansFlagged) {
  const auto a = assignment({"a", "b", "c"}, vec({0, 1, 2}), 3);
  const auto p = most_differing_pair(a, Eigen::Vector3d(0.5, 0.5, 0.5));
  EXPECT_EQ(p.first, 0);
  EXPECT_EQ(p.second, 1);
  EXPECT_TRUE(p.tie);
}
