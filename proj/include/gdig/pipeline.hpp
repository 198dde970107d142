#pragma once

#include <string>
#include <vector>

#include "gdig/config.hpp"
#include "gdig/select.hpp"

namespace gdig::pipeline {

// Stage order; each stage reads the previous stage's artifacts from the
// output directory and records the config hash in the run manifest.
inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"finetune", "grads", "curvature",
                                                 "influence", "select"};
  return names;
}

struct StagePaths {
  std::string checkpoint;
  std::string history;
  std::string seed_grads;
  std::string candidate_grads;
  std::string kfac;
  std::string influence;
  std::string diversity_grads;
  std::string selection_report;
  std::string selected;
  std::string manifest;

  static StagePaths in(const std::string& out_dir);
};

// Runs every stage, skipping those whose cached artifacts carry the
// current config hash. `resume_from` names a stage to force: earlier
// stages must then be valid in cache (cache error otherwise), that stage
// and all later ones recompute.
select::SelectionReport run(const config::PipelineConfig& cfg,
                            const std::string& resume_from = "");

// Runs one stage, recomputing it; upstream stages must be cached.
void run_single(const config::PipelineConfig& cfg, const std::string& stage);

}  // namespace gdig::pipeline
