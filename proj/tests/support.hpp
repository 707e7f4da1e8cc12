#pragma once

#include "moralprobe/moral_matrix.hpp"
#include "moralprobe/rng.hpp"
#include "moralprobe/survey_ingest.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

namespace mptest {

namespace fs = std::filesystem;
using namespace moralprobe;

inline fs::path source_dir() { return fs::path(MORALPROBE_SOURCE_DIR); }

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / fmt::format("moralprobe-test-{}-{}", ::getpid(), counter++);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline std::vector<std::string> labels(const char* stem, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(fmt::format("{} {:02}", stem, i + 1));
  return out;
}

/// Bounded matrix whose countries fall into `groups` blocs with distinct
/// per-topic centres.
inline MoralMatrix synthetic_matrix(std::vector<std::string> countries, std::vector<std::string> topics,
                                    std::uint64_t seed, int groups = 3, double noise = 0.08) {
  std::mt19937_64 rng(seed);
  const auto n = static_cast<Eigen::Index>(countries.size());
  const auto t = static_cast<Eigen::Index>(topics.size());
  Eigen::MatrixXd centres(groups, t);
  for (Eigen::Index g = 0; g < groups; ++g) {
    for (Eigen::Index j = 0; j < t; ++j) centres(g, j) = -0.9 + 1.6 * uniform01(rng);
  }
  MoralMatrix m;
  m.countries = std::move(countries);
  m.topics = std::move(topics);
  m.source_tag = "synthetic";
  m.scores.resize(n, t);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < t; ++j) {
      const double v = centres(i % groups, j) + noise * (2.0 * uniform01(rng) - 1.0);
      m.scores(i, j) = round4(std::clamp(v, -1.0, 1.0));
    }
  }
  return m;
}

/// Wide WVS-style export: one respondent per row, answers 1..10 with a few
/// non-response codes.
inline std::string synthetic_wvs_csv(const std::vector<std::string>& codes, int respondents, std::uint64_t seed) {
  const auto layout = SurveyLayout::wvs_wave7();
  std::mt19937_64 rng(seed);
  std::string out = layout.country_column;
  for (const auto& [col, _] : layout.questions) out += "," + col;
  out += "\n";
  for (std::size_t c = 0; c < codes.size(); ++c) {
    std::vector<double> lean;
    for (std::size_t q = 0; q < layout.questions.size(); ++q) lean.push_back(uniform01(rng));
    for (int r = 0; r < respondents; ++r) {
      out += codes[c];
      for (std::size_t q = 0; q < layout.questions.size(); ++q) {
        int answer;
        const double u = uniform01(rng);
        if (u < 0.03) {
          answer = -1 - static_cast<int>(uniform_index(rng, 2));
        } else {
          const double x = lean[q] * lean[q] * 9.0 + 1.0 + 3.0 * (uniform01(rng) - 0.5);
          answer = std::clamp(static_cast<int>(std::lround(x)), 1, 10);
        }
        out += fmt::format(",{}", answer);
      }
      out += "\n";
    }
  }
  return out;
}

/// Wide PEW-style export with country names and option codes 1..4, 8, 9.
inline std::string synthetic_pew_csv(const std::vector<std::string>& names, int respondents, std::uint64_t seed) {
  const auto layout = SurveyLayout::pew_2013();
  std::mt19937_64 rng(seed);
  std::string out = layout.country_column;
  for (const auto& [col, _] : layout.questions) out += "," + col;
  out += "\n";
  constexpr int codes[] = {1, 2, 3, 4, 8, 9};
  for (const auto& name : names) {
    std::vector<double> accept;
    for (std::size_t q = 0; q < layout.questions.size(); ++q) accept.push_back(0.1 + 0.7 * uniform01(rng));
    for (int r = 0; r < respondents; ++r) {
      out += name;
      for (std::size_t q = 0; q < layout.questions.size(); ++q) {
        const double u = uniform01(rng);
        int code;
        if (u < 0.04) {
          code = codes[3 + uniform_index(rng, 3)];
        } else if (u < 0.04 + 0.96 * accept[q] * 0.8) {
          code = 1;
        } else if (u < 0.9) {
          code = 2;
        } else {
          code = 3;
        }
        out += fmt::format(",{}", code);
      }
      out += "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Independent oracles

/// Every set partition of n items as restricted growth strings.
inline std::vector<Eigen::VectorXi> all_partitions(int n) {
  std::vector<Eigen::VectorXi> out;
  Eigen::VectorXi a = Eigen::VectorXi::Zero(n);
  std::function<void(int, int)> rec = [&](int i, int max_label) {
    if (i == n) {
      out.push_back(a);
      return;
    }
    for (int l = 0; l <= max_label + 1; ++l) {
      a[i] = l;
      rec(i + 1, std::max(max_label, l));
    }
  };
  if (n == 0) return out;
  a[0] = 0;
  rec(1, 0);
  return out;
}

/// ARI from the four pair counts over all item pairs.
inline double ari_pair_counting(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j];
      const bool sb = b[i] == b[j];
      if (sa && sb) ++n11;
      else if (sa) ++n10;
      else if (sb) ++n01;
      else ++n00;
    }
  }
  const double denom = (n11 + n01) * (n01 + n00) + (n11 + n10) * (n10 + n00);
  if (denom == 0.0) return 1.0;
  return 2.0 * (n11 * n00 - n01 * n10) / denom;
}

inline double mutual_information_direct(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  const double n = static_cast<double>(a.size());
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> pa, pb;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    pa[a[i]] += 1;
    pb[b[i]] += 1;
  }
  double mi = 0;
  for (const auto& [k, c] : joint) mi += c / n * std::log(n * c / (pa[k.first] * pb[k.second]));
  return mi;
}

inline double entropy_direct(const Eigen::VectorXi& a) {
  std::map<int, double> p;
  for (Eigen::Index i = 0; i < a.size(); ++i) p[a[i]] += 1;
  double h = 0;
  for (const auto& [_, c] : p) h -= c / a.size() * std::log(c / a.size());
  return h;
}

/// E[MI] as the average over every permutation of b's labels: exactly the
/// hypergeometric model for fixed marginals.
inline double expected_mi_enumeration(const Eigen::VectorXi& a, const Eigen::VectorXi& b) {
  std::vector<int> perm(static_cast<std::size_t>(a.size()));
  std::iota(perm.begin(), perm.end(), 0);
  double sum = 0;
  double count = 0;
  Eigen::VectorXi pb(b.size());
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) pb[static_cast<Eigen::Index>(i)] = b[perm[i]];
    sum += mutual_information_direct(a, pb);
    count += 1;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return sum / count;
}

inline int n_clusters(const Eigen::VectorXi& a) {
  std::set<int> s(a.data(), a.data() + a.size());
  return static_cast<int>(s.size());
}

/// AMI with enumeration E[MI] and the documented degenerate conventions.
inline double ami_enumeration(
    const Eigen::VectorXi& a, const Eigen::VectorXi& b,
    const std::function<double(const Eigen::VectorXi&, const Eigen::VectorXi&)>& emi_fn = expected_mi_enumeration) {
  const int ka = n_clusters(a), kb = n_clusters(b);
  if (ka <= 1 || kb <= 1) return (ka <= 1 && kb <= 1) ? 1.0 : 0.0;
  // identical up to relabeling
  bool same = true;
  for (Eigen::Index i = 0; i < a.size() && same; ++i) {
    for (Eigen::Index j = 0; j < a.size() && same; ++j) same = (a[i] == a[j]) == (b[i] == b[j]);
  }
  if (same) return 1.0;
  const double emi = emi_fn(a, b);
  const double mi = mutual_information_direct(a, b);
  double denom = (entropy_direct(a) + entropy_direct(b)) / 2.0 - emi;
  const double eps = std::numeric_limits<double>::epsilon();
  denom = denom < 0 ? std::min(denom, -eps) : std::max(denom, eps);
  return (mi - emi) / denom;
}

/// Pearson r straight from the covariance definition, long-double sums.
inline double pearson_oracle(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto n = x.size();
  long double mx = 0, my = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

}  // namespace mptest

namespace mptest {

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const fs::path& p, std::string_view text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace mptest
