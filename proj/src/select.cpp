#include "gdig/select.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "gdig/error.hpp"
#include "gdig/parallel.hpp"

namespace gdig::select {

QualityCriterion QualityCriterion::fraction(double tau) {
  if (!(tau > 0.0) || tau > 1.0) throw input_error("QualityCriterion: tau must be in (0,1]");
  QualityCriterion c;
  c.mode = Mode::kFraction;
  c.tau = tau;
  return c;
}

std::vector<std::string> quality_filter(const influence::InfluenceMatrix& m,
                                        const QualityCriterion& c) {
  if (m.scores.rows() == 0 || m.scores.cols() == 0) {
    throw input_error("quality_filter: empty influence matrix");
  }
  const Eigen::Index n_seeds = m.scores.cols();
  std::vector<std::string> pass;
  for (Eigen::Index row = 0; row < m.scores.rows(); ++row) {
    Eigen::Index negatives = 0;
    for (Eigen::Index col = 0; col < n_seeds; ++col) {
      if (m.scores(row, col) < 0.0) ++negatives;
    }
    const bool keep = c.mode == QualityCriterion::Mode::kStrict
                          ? negatives == n_seeds
                          : static_cast<double>(negatives) >=
                                c.tau * static_cast<double>(n_seeds);
    if (keep) pass.push_back(m.candidate_ids[static_cast<std::size_t>(row)]);
  }
  return pass;
}

namespace {

// k-means++ seeding: each new centroid drawn with probability
// proportional to the squared distance to the nearest existing one.
Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  Eigen::MatrixXd centroids(k, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.index(n)));
  Eigen::VectorXd dist =
      (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= dist(i);
        if (r <= 0.0) {
          pick = i;
          break;
        }
        pick = i;
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.index(n));
    }
    centroids.row(c) = points.row(pick);
    dist = dist.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }
  return centroids;
}

}  // namespace

ClusterModel kmeans(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = points.rows();
  if (k < 1 || static_cast<Eigen::Index>(k) > n) {
    throw input_error("kmeans: need 1 <= k <= number of points");
  }
  if (!points.allFinite()) throw input_error("kmeans: non-finite points");

  ClusterModel model;
  model.centroids = kmeanspp_init(points, k, rng);
  model.assignment.assign(static_cast<std::size_t>(n), 0);
  double prev_inertia = std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < max_iter; ++iter) {
    // Assignment step.
    std::vector<double> point_dist(static_cast<std::size_t>(n), 0.0);
    std::vector<int> next_assignment(static_cast<std::size_t>(n), 0);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
      Eigen::Index best;
      point_dist[i] = (model.centroids.rowwise() - points.row(static_cast<Eigen::Index>(i)))
                          .rowwise()
                          .squaredNorm()
                          .minCoeff(&best);
      next_assignment[i] = static_cast<int>(best);
    });
    const bool changed = next_assignment != model.assignment;
    model.assignment = next_assignment;
    model.inertia = std::accumulate(point_dist.begin(), point_dist.end(), 0.0);
    model.iterations = iter + 1;
    if (model.inertia > prev_inertia + 1e-9 * std::max(1.0, prev_inertia)) {
      throw Error("invariant", "kmeans: inertia increased across iterations");
    }
    prev_inertia = model.inertia;
    if (!changed && iter > 0) break;

    // Update step, merged in fixed cluster order.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
    std::vector<std::int64_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(model.assignment[static_cast<std::size_t>(i)]) += points.row(i);
      counts[static_cast<std::size_t>(model.assignment[static_cast<std::size_t>(i)])]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        model.centroids.row(c) =
            sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        // Re-seed an empty cluster at the point farthest from its centroid.
        Eigen::Index farthest = 0;
        double best = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (point_dist[static_cast<std::size_t>(i)] > best) {
            best = point_dist[static_cast<std::size_t>(i)];
            farthest = i;
          }
        }
        model.centroids.row(c) = points.row(farthest);
        point_dist[static_cast<std::size_t>(farthest)] = 0.0;
      }
    }
  }

  // Final assignment consistent with the returned centroids.
  model.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best;
    model.inertia += (model.centroids.rowwise() - points.row(i))
                         .rowwise()
                         .squaredNorm()
                         .minCoeff(&best);
    model.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return model;
}

DiversifyResult diversify(
    const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& features,
    std::size_t n_select, int k_clusters, int proj_dim, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(features.rows());
  if (n_select > n) throw input_error("diversify: n_select exceeds the pool");
  if (k_clusters < 1 || static_cast<std::size_t>(k_clusters) > n) {
    throw input_error("diversify: need 1 <= k_clusters <= pool size");
  }
  if (proj_dim < 1 || proj_dim > features.cols()) {
    throw input_error("diversify: need 1 <= proj_dim <= feature dim");
  }

  Rng proj_rng = rng.derive(1);
  Eigen::MatrixXd projection =
      random_projection(static_cast<int>(features.cols()), proj_dim, proj_rng);
  Eigen::MatrixXd points = features.cast<double>() * projection.transpose();

  Rng kmeans_rng = rng.derive(2);
  ClusterModel clusters = kmeans(points, k_clusters, kmeans_rng);

  // Round-robin: visit non-exhausted clusters cyclically in shuffled
  // order, drawing one uniformly-random unused member per visit.
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k_clusters));
  for (std::size_t i = 0; i < n; ++i) {
    members[static_cast<std::size_t>(clusters.assignment[i])].push_back(i);
  }
  std::vector<int> visit_order(k_clusters);
  std::iota(visit_order.begin(), visit_order.end(), 0);
  Rng sample_rng = rng.derive(3);
  sample_rng.shuffle(visit_order);

  DiversifyResult result;
  result.assignment = clusters.assignment;
  result.take_counts.assign(static_cast<std::size_t>(k_clusters), 0);
  std::size_t drawn = 0;
  while (drawn < n_select) {
    for (int c : visit_order) {
      if (drawn >= n_select) break;
      auto& pool = members[static_cast<std::size_t>(c)];
      if (pool.empty()) continue;
      const std::size_t pick = sample_rng.index(pool.size());
      result.selected.push_back(pool[pick]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
      result.take_counts[static_cast<std::size_t>(c)]++;
      ++drawn;
    }
  }
  return result;
}

std::string report_to_json(const SelectionReport& report) {
  nlohmann::json j = {
      {"quality_pass_ids", report.quality_pass_ids},
      {"cluster_of_selected", report.cluster_of_selected},
      {"selected_ids", report.selected_ids},
      {"take_counts", report.take_counts},
      {"config", {{"lambda", report.lambda},
                  {"k_clusters", report.k_clusters},
                  {"proj_dim", report.proj_dim},
                  {"seed", report.seed},
                  {"config_hash", report.config_hash}}},
  };
  return j.dump(2);
}

}  // namespace gdig::select
