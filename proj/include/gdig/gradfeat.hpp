#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gdig/toylm.hpp"

namespace gdig::gradfeat {

enum class SelectorMode : std::uint8_t { kExplicit = 0, kStride = 1, kFinalOnly = 2 };

// Picks which dense layers contribute gradient features. Layer indices
// run over the hidden layers 0..L-1 plus the output projection at L.
struct LayerSelector {
  SelectorMode mode = SelectorMode::kFinalOnly;
  std::vector<int> layers;  // explicit mode
  int stride = 3;           // stride mode

  static LayerSelector explicit_layers(std::vector<int> layers);
  static LayerSelector strided(int stride);
  static LayerSelector final_only();

  // Concrete ascending layer indices for a model.
  std::vector<int> resolve(const toylm::ModelConfig& cfg) const;
  // Total parameter count (weights + bias) of the selected layers.
  std::int64_t feature_dim(const toylm::ModelConfig& cfg) const;
  std::string describe() const;
};

struct FeatureVector {
  std::string id;
  Eigen::VectorXf values;
};

// Token-averaged gradient features for the selected layers. Per layer the
// flattening is row-major over the augmented block [W | b].
FeatureVector extract(const toylm::Params& params, const toylm::Example& example,
                      const LayerSelector& sel);

struct GradCache {
  std::int64_t dim = 0;
  LayerSelector selector;
  std::vector<std::string> ids;
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows;  // count x dim

  std::int64_t count() const { return rows.rows(); }
  FeatureVector feature(std::int64_t row) const;
};

// Extract every example and persist at `path` (ids in a JSONL sidecar
// `path + ".ids.jsonl"`). Row order follows the input order.
GradCache batch_extract(const toylm::Params& params,
                        const std::vector<toylm::Example>& data, const LayerSelector& sel,
                        const std::string& path);

void save_cache(const GradCache& cache, const std::string& path);
GradCache load_cache(const std::string& path);

}  // namespace gdig::gradfeat
