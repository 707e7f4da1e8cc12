#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace moralprobe {

enum class ClusterAlgorithm { KMeans, Agglomerative };
enum class Linkage { Ward, Average };

std::string_view to_string(ClusterAlgorithm a);
std::string_view to_string(Linkage l);
Linkage linkage_from_string(std::string_view s);

struct ClusterAssignment {
  std::vector<std::string> items;
  Eigen::VectorXi labels;
  int k = 0;
  ClusterAlgorithm algorithm = ClusterAlgorithm::KMeans;
  std::uint64_t seed = 0;
  double inertia = 0.0;
  /// K-means only: inertia after each Lloyd step of the winning restart.
  std::vector<double> inertia_trace;

  /// Labels in [0, k), every label used, sizes consistent.
  void validate() const;
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  std::uint64_t seed = 42;
};

/// k-means++ seeding plus Lloyd iterations to an assignment fixpoint; the
/// restart with the lowest inertia wins (earliest restart on ties). Rows of
/// `points` are observations.
ClusterAssignment kmeans(const Eigen::Ref<const Eigen::MatrixXd>& points, int k,
                         const KMeansOptions& options = {}, std::vector<std::string> items = {});

/// Mean silhouette with Euclidean distance. Singletons contribute 0, as do
/// points with a = b = 0. Throws when k < 2.
double silhouette(const Eigen::Ref<const Eigen::MatrixXd>& points, const Eigen::VectorXi& labels);

struct KSelection {
  int k = 0;
  bool flagged = false;  // range clipped, or no clear optimum
  std::vector<std::pair<int, double>> curve;
};

/// K in [k_min, k_max] clipped to [2, n - 1] maximizing silhouette of the
/// k-means clustering; smaller K wins ties.
KSelection select_k_silhouette(const Eigen::Ref<const Eigen::MatrixXd>& points, int k_min, int k_max,
                               const KMeansOptions& options = {});

/// Bottom-up merging of scalar values until k clusters remain. Labels are
/// numbered by increasing cluster mean.
ClusterAssignment agglomerative_1d(const Eigen::Ref<const Eigen::VectorXd>& values, int k,
                                   Linkage linkage = Linkage::Ward, std::vector<std::string> items = {});

/// Within-cluster sum of squared deviations from cluster means.
double within_cluster_ss(const Eigen::Ref<const Eigen::MatrixXd>& points, const Eigen::VectorXi& labels);

/// Knee of a W(k) curve: the k whose point lies farthest from the chord
/// joining the first and last points. A flat or linear curve yields the
/// smallest k, flagged.
KSelection elbow_from_curve(std::span<const int> ks, std::span<const double> wcss);

/// Elbow selection over agglomerative clusterings of `values`, K clipped to
/// [1, n - 1].
KSelection elbow_k(const Eigen::Ref<const Eigen::VectorXd>& values, int k_min, int k_max,
                   Linkage linkage = Linkage::Ward);

double adjusted_rand_index(const Eigen::VectorXi& a, const Eigen::VectorXi& b);

struct AmiResult {
  double value = 0.0;
  bool flagged = false;  // degenerate (zero-entropy) case
};

/// Adjusted mutual information, arithmetic-mean normalization, expected MI
/// under the hypergeometric permutation model.
AmiResult adjusted_mutual_information(const Eigen::VectorXi& a, const Eigen::VectorXi& b);

/// Item lists must match; throws ValidationError otherwise.
double ari(const ClusterAssignment& a, const ClusterAssignment& b);
AmiResult ami(const ClusterAssignment& a, const ClusterAssignment& b);

struct AlignmentScores {
  double ari = 0.0;
  double ami = 0.0;
  double cas = 0.0;
};

inline double cas(double ari_value, double ami_value) { return (ari_value + ami_value) / 2.0; }

struct ClusterPair {
  int first = 0;
  int second = 1;
  double gap = 0.0;
  bool tie = false;
};

/// The two clusters whose mean values differ most; smallest id pair on ties.
ClusterPair most_differing_pair(const ClusterAssignment& assignment,
                                const Eigen::Ref<const Eigen::VectorXd>& values);

}  // namespace moralprobe
