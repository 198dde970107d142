#include "gdig/influence.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "gdig/error.hpp"
#include "gdig/parallel.hpp"

namespace gdig::influence {

double influence_pair(const curvature::DampedInverse& inv,
                      const gradfeat::FeatureVector& g_t,
                      const gradfeat::FeatureVector& g_m) {
  if (g_t.values.size() != g_m.values.size()) {
    throw shape_error("influence_pair: feature dims differ");
  }
  const Eigen::VectorXd precond = curvature::ihvp(inv, g_t.values);
  return -precond.dot(g_m.values.cast<double>());
}

double self_influence(const curvature::DampedInverse& inv, const gradfeat::FeatureVector& g) {
  return influence_pair(inv, g, g);
}

InfluenceMatrix influence_matrix(const curvature::DampedInverse& inv,
                                 const gradfeat::GradCache& seeds,
                                 const gradfeat::GradCache& candidates) {
  if (seeds.dim != candidates.dim) {
    throw shape_error("influence_matrix: seed and candidate feature dims differ");
  }
  if (seeds.dim != curvature::inverse_dim(inv)) {
    throw shape_error("influence_matrix: feature dim does not match curvature");
  }
  const Eigen::Index n_seeds = seeds.count();
  const Eigen::Index n_cand = candidates.count();

  // One ihvp per seed; seeds are the short axis.
  std::vector<Eigen::VectorXd> precond = parallel_map<Eigen::VectorXd>(
      static_cast<std::size_t>(n_seeds), [&](std::size_t t) {
        return curvature::ihvp(
            inv, Eigen::VectorXf(seeds.rows.row(static_cast<Eigen::Index>(t)).transpose()));
      });

  InfluenceMatrix result;
  result.candidate_ids = candidates.ids;
  result.seed_ids = seeds.ids;
  result.lambda = inv.lambda;
  result.selector = candidates.selector.describe();
  result.scores.resize(n_cand, n_seeds);
  parallel_for(static_cast<std::size_t>(n_cand), [&](std::size_t m) {
    const Eigen::VectorXd cand =
        candidates.rows.row(static_cast<Eigen::Index>(m)).transpose().cast<double>();
    for (Eigen::Index t = 0; t < n_seeds; ++t) {
      result.scores(static_cast<Eigen::Index>(m), t) = -precond[t].dot(cand);
    }
  });
  return result;
}

namespace {
constexpr char kMagic[4] = {'G', 'I', 'N', 'M'};
}

void save_matrix(const InfluenceMatrix& m, const std::string& path) {
  nlohmann::json header = {
      {"candidate_ids", m.candidate_ids}, {"seed_ids", m.seed_ids},
      {"rows", m.scores.rows()},          {"cols", m.scores.cols()},
      {"lambda", m.lambda},               {"selector", m.selector},
      {"config_hash", m.config_hash},
  };
  const std::string header_text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  const std::uint64_t len = header_text.size();
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(header_text.data(), static_cast<std::streamsize>(len));
  // row-major block
  for (Eigen::Index i = 0; i < m.scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.scores.cols(); ++j) {
      const double d = m.scores(i, j);
      os.write(reinterpret_cast<const char*>(&d), sizeof(double));
    }
  }
  if (!os) throw io_error("write failed for " + path);
}

InfluenceMatrix load_matrix(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw io_error(path + ": bad magic");
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_text(len, '\0');
  is.read(header_text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header = nlohmann::json::parse(header_text);

  InfluenceMatrix m;
  m.candidate_ids = header.at("candidate_ids").get<std::vector<std::string>>();
  m.seed_ids = header.at("seed_ids").get<std::vector<std::string>>();
  m.lambda = header.at("lambda").get<double>();
  m.selector = header.at("selector").get<std::string>();
  m.config_hash = header.value("config_hash", std::uint64_t{0});
  const auto rows = header.at("rows").get<Eigen::Index>();
  const auto cols = header.at("cols").get<Eigen::Index>();
  m.scores.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      double d;
      is.read(reinterpret_cast<char*>(&d), sizeof(double));
      m.scores(i, j) = d;
    }
  }
  if (!is) throw io_error(path + ": truncated file");
  return m;
}

}  // namespace gdig::influence
