#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gdig/gradfeat.hpp"
#include "gdig/influence.hpp"
#include "gdig/linalg.hpp"
#include "gdig/rng.hpp"

namespace gdig::select {

// strict: keep candidates with negative influence on every seed;
// fraction: keep those negative on at least tau of the seeds.
struct QualityCriterion {
  enum class Mode { kStrict, kFraction };
  Mode mode = Mode::kStrict;
  double tau = 1.0;  // fraction mode, in (0, 1]

  static QualityCriterion strict() { return {}; }
  static QualityCriterion fraction(double tau);
};

struct ClusterModel {
  Eigen::MatrixXd centroids;        // k x d
  std::vector<int> assignment;      // per point
  double inertia = 0.0;
  int iterations = 0;
};

struct SelectionReport {
  std::vector<std::string> quality_pass_ids;
  std::vector<int> cluster_of_selected;    // parallel to quality_pass_ids
  std::vector<std::string> selected_ids;   // final resampled subset
  std::vector<int> take_counts;            // per cluster
  double lambda = 0.0;
  int k_clusters = 0;
  int proj_dim = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

std::vector<std::string> quality_filter(const influence::InfluenceMatrix& m,
                                        const QualityCriterion& c);

// Lloyd's algorithm with k-means++ init; empty clusters are re-seeded to
// the point farthest from its assigned centroid.
ClusterModel kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iter = 100);

struct DiversifyResult {
  std::vector<std::size_t> selected;  // indices into the feature list
  std::vector<int> assignment;        // cluster per pool member
  std::vector<int> take_counts;       // per cluster
};

// Random-project the features, cluster, then round-robin over clusters in
// shuffled order drawing one uniformly-random unused member per visit.
DiversifyResult diversify(
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& features,
    std::size_t n_select, int k_clusters, int proj_dim, Rng& rng);

std::string report_to_json(const SelectionReport& report);

}  // namespace gdig::select
