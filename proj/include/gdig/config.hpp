#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "gdig/finetune.hpp"
#include "gdig/gradfeat.hpp"
#include "gdig/select.hpp"
#include "gdig/toylm.hpp"

namespace gdig::config {

// key=value file with [section] headers; '#' starts a comment.
class IniFile {
 public:
  static IniFile parse_file(const std::string& path);
  static IniFile parse_text(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  void set(const std::string& section, const std::string& key, const std::string& value);

  // FNV-1a over the sorted canonical "section.key=value" lines.
  std::uint64_t hash() const;

 private:
  std::map<std::string, std::string> values_;  // "section.key" -> value
};

struct PipelineConfig {
  // data
  std::string candidates_path;
  std::string seeds_path;
  std::string valid_path;
  std::string test_path;
  // model
  toylm::ModelConfig model;
  double init_scale = 0.1;
  // train
  finetune::TrainConfig train;
  // influence
  double lambda = 1e-3;
  gradfeat::LayerSelector influence_selector = gradfeat::LayerSelector::strided(3);
  gradfeat::LayerSelector diversity_selector = gradfeat::LayerSelector::final_only();
  select::QualityCriterion quality;
  // diversity; zero means "derive from the pool at run time"
  int k_clusters = 0;   // default min(512, pool/4)
  int proj_dim = 0;     // default min(400, feature dim)
  std::size_t n_select = 0;
  // run
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::uint64_t config_hash = 0;

  static PipelineConfig from_ini(const IniFile& ini);
  void validate_paths() const;

  int effective_k_clusters(std::size_t pool) const;
  int effective_proj_dim(std::int64_t feature_dim) const;
};

gradfeat::LayerSelector parse_selector(const std::string& text);

}  // namespace gdig::config
