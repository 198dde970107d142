#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gdig/rng.hpp"

namespace gdig::toylm {

using Token = std::int32_t;
using TokenList = std::vector<Token>;

// Byte-level vocabulary: 256 raw byte values plus BOS/EOS/PAD.
namespace vocab {
inline constexpr Token kBos = 256;
inline constexpr Token kEos = 257;
inline constexpr Token kPad = 258;
inline constexpr int kSize = 259;

TokenList tokenize(const std::string& text);
std::string detokenize(const TokenList& tokens);  // drops control tokens
}  // namespace vocab

struct Example {
  std::string id;
  TokenList prompt_tokens;    // x
  TokenList response_tokens;  // y
};

struct ModelConfig {
  int vocab_size = vocab::kSize;
  int embed_dim = 16;       // E
  int context_window = 8;   // C
  int hidden_dim = 32;      // H
  int num_mlp_layers = 4;   // L hidden dense layers (plus output projection)

  void validate() const;
  // Number of gradient-selectable dense layers: L hidden plus the output
  // projection at index L.
  int num_selectable_layers() const { return num_mlp_layers + 1; }
  // Input width of selectable layer `idx` (without the homogeneous 1).
  int layer_in_dim(int idx) const;
  // Output width of selectable layer `idx`.
  int layer_out_dim(int idx) const;
  // Parameter count of selectable layer `idx`, weights plus bias.
  std::int64_t layer_param_count(int idx) const {
    return static_cast<std::int64_t>(layer_out_dim(idx)) * (layer_in_dim(idx) + 1);
  }
};

struct DenseLayer {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;  // out
};

// Full parameter set; block order is fixed and shared with the
// checkpoint format and gradient structures.
struct Params {
  ModelConfig config;
  Eigen::MatrixXd embedding;        // vocab x E
  std::vector<DenseLayer> hidden;   // layer 0: H x (C*E); layers 1..L-1: H x H
  DenseLayer output;                // vocab x H

  static Params zeros(const ModelConfig& cfg);
  static Params random_init(const ModelConfig& cfg, double scale, Rng& rng);

  std::int64_t total_param_count() const;
  const DenseLayer& selectable_layer(int idx) const;

  // In-place a*x + this over every block, shapes must match.
  void axpy(double a, const Params& x);
  void scale(double a);
  double dot(const Params& other) const;
  bool same_shape(const Params& other) const;
};

Params make_zero_like(const Params& p);

// Gradient of the response loss; blocks mirror Params.
struct PerExampleGradient {
  Params blocks;              // same shapes, gradient values
  int response_token_count = 0;
};

// Per selected layer, one (a, g) pair per response token: a is the layer
// input with a trailing homogeneous 1, g the pre-activation gradient.
struct KfacLayerStats {
  int layer_index = 0;
  std::vector<Eigen::VectorXd> activations;  // in+1
  std::vector<Eigen::VectorXd> grads;        // out
};

struct KfacStats {
  std::vector<KfacLayerStats> layers;
};

// The translation instruction prompt; plain concatenation, no escaping.
std::string render_prompt(const std::string& src_text, const std::string& trg_lang);

// Response-only negative log likelihood, summed over response positions.
double loss(const Params& params, const Example& example);

// Gradient of `loss` plus KFAC statistics for the given layer subset
// (indices into the selectable layers; pass {} for no stats).
std::pair<PerExampleGradient, KfacStats> backward(const Params& params,
                                                  const Example& example,
                                                  const std::vector<int>& kfac_layers = {});

// Greedy argmax continuation of the prompt; stops at EOS or max_tokens.
TokenList greedy_decode(const Params& params, const TokenList& prompt, int max_tokens);

// Teacher-forced argmax predictions for each response position; ties are
// broken uniformly at random so an all-uniform model is unbiased.
TokenList teacher_forced_argmax(const Params& params, const Example& example, Rng& rng);

// Checkpoint file: magic "GDLM", version, config block, little-endian f64
// parameter blocks in declaration order.
void save_params(const Params& params, const std::string& path);
Params load_params(const std::string& path);

}  // namespace gdig::toylm
