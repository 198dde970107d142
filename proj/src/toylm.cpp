#include "gdig/toylm.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "gdig/error.hpp"

namespace gdig::toylm {

namespace vocab {

TokenList tokenize(const std::string& text) {
  TokenList tokens;
  tokens.reserve(text.size());
  for (unsigned char c : text) tokens.push_back(static_cast<Token>(c));
  return tokens;
}

std::string detokenize(const TokenList& tokens) {
  std::string text;
  text.reserve(tokens.size());
  for (Token t : tokens) {
    if (t >= 0 && t < 256) text.push_back(static_cast<char>(t));
  }
  return text;
}

}  // namespace vocab

void ModelConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || context_window < 1 || hidden_dim < 1 ||
      num_mlp_layers < 1) {
    throw input_error("ModelConfig: all dimensions must be >= 1");
  }
}

int ModelConfig::layer_in_dim(int idx) const {
  if (idx < 0 || idx > num_mlp_layers) throw input_error("layer index out of range");
  if (idx == 0) return context_window * embed_dim;
  if (idx == num_mlp_layers) return hidden_dim;  // output projection
  return hidden_dim;
}

int ModelConfig::layer_out_dim(int idx) const {
  if (idx < 0 || idx > num_mlp_layers) throw input_error("layer index out of range");
  if (idx == num_mlp_layers) return vocab_size;
  return hidden_dim;
}

Params Params::zeros(const ModelConfig& cfg) {
  cfg.validate();
  Params p;
  p.config = cfg;
  p.embedding = Eigen::MatrixXd::Zero(cfg.vocab_size, cfg.embed_dim);
  p.hidden.resize(cfg.num_mlp_layers);
  for (int l = 0; l < cfg.num_mlp_layers; ++l) {
    p.hidden[l].W = Eigen::MatrixXd::Zero(cfg.layer_out_dim(l), cfg.layer_in_dim(l));
    p.hidden[l].b = Eigen::VectorXd::Zero(cfg.layer_out_dim(l));
  }
  p.output.W = Eigen::MatrixXd::Zero(cfg.vocab_size, cfg.hidden_dim);
  p.output.b = Eigen::VectorXd::Zero(cfg.vocab_size);
  return p;
}

Params Params::random_init(const ModelConfig& cfg, double scale, Rng& rng) {
  Params p = zeros(cfg);
  auto fill = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
  };
  auto fillv = [&](Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = scale * rng.normal();
  };
  fill(p.embedding);
  for (auto& layer : p.hidden) {
    fill(layer.W);
    fillv(layer.b);
  }
  fill(p.output.W);
  fillv(p.output.b);
  return p;
}

std::int64_t Params::total_param_count() const {
  std::int64_t n = embedding.size();
  for (const auto& layer : hidden) n += layer.W.size() + layer.b.size();
  n += output.W.size() + output.b.size();
  return n;
}

const DenseLayer& Params::selectable_layer(int idx) const {
  if (idx < 0 || idx > config.num_mlp_layers) throw input_error("layer index out of range");
  if (idx == config.num_mlp_layers) return output;
  return hidden[idx];
}

bool Params::same_shape(const Params& other) const {
  if (embedding.rows() != other.embedding.rows() ||
      embedding.cols() != other.embedding.cols() || hidden.size() != other.hidden.size())
    return false;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    if (hidden[l].W.rows() != other.hidden[l].W.rows() ||
        hidden[l].W.cols() != other.hidden[l].W.cols())
      return false;
  }
  return output.W.rows() == other.output.W.rows() &&
         output.W.cols() == other.output.W.cols();
}

void Params::axpy(double a, const Params& x) {
  if (!same_shape(x)) throw shape_error("Params::axpy: shape mismatch");
  embedding += a * x.embedding;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    hidden[l].W += a * x.hidden[l].W;
    hidden[l].b += a * x.hidden[l].b;
  }
  output.W += a * x.output.W;
  output.b += a * x.output.b;
}

void Params::scale(double a) {
  embedding *= a;
  for (auto& layer : hidden) {
    layer.W *= a;
    layer.b *= a;
  }
  output.W *= a;
  output.b *= a;
}

double Params::dot(const Params& other) const {
  if (!same_shape(other)) throw shape_error("Params::dot: shape mismatch");
  double s = embedding.cwiseProduct(other.embedding).sum();
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    s += hidden[l].W.cwiseProduct(other.hidden[l].W).sum();
    s += hidden[l].b.dot(other.hidden[l].b);
  }
  s += output.W.cwiseProduct(other.output.W).sum();
  s += output.b.dot(other.output.b);
  return s;
}

Params make_zero_like(const Params& p) { return Params::zeros(p.config); }

std::string render_prompt(const std::string& src_text, const std::string& trg_lang) {
  return "Translate the following text into " + trg_lang + ".\n\nText:\n\"" + src_text +
         "\"";
}

namespace {

void check_tokens(const ModelConfig& cfg, const TokenList& tokens, const std::string& what) {
  for (Token t : tokens) {
    if (t < 0 || t >= cfg.vocab_size) {
      throw input_error(what + ": token " + std::to_string(t) + " out of range");
    }
  }
}

// Context window for predicting position `pos` of the concatenated
// prompt+response sequence: the C tokens before it, left-padded with PAD.
void fill_window(const ModelConfig& cfg, const TokenList& prompt, const TokenList& response,
                 int response_pos, TokenList& window) {
  const int c = cfg.context_window;
  window.assign(c, vocab::kPad);
  const int total = static_cast<int>(prompt.size()) + response_pos;
  for (int k = 0; k < c; ++k) {
    const int src = total - c + k;
    if (src < 0) continue;
    window[k] = src < static_cast<int>(prompt.size())
                    ? prompt[src]
                    : response[src - static_cast<int>(prompt.size())];
  }
}

struct ForwardState {
  Eigen::VectorXd x0;                    // C*E concatenated embeddings
  std::vector<Eigen::VectorXd> h;        // post-activation per hidden layer
  Eigen::VectorXd logits;
  Eigen::VectorXd log_probs;
};

void forward_position(const Params& p, const TokenList& window, ForwardState& st) {
  const ModelConfig& cfg = p.config;
  const int e = cfg.embed_dim;
  st.x0.resize(cfg.context_window * e);
  for (int k = 0; k < cfg.context_window; ++k) {
    st.x0.segment(static_cast<Eigen::Index>(k) * e, e) = p.embedding.row(window[k]).transpose();
  }
  st.h.resize(cfg.num_mlp_layers);
  const Eigen::VectorXd* in = &st.x0;
  for (int l = 0; l < cfg.num_mlp_layers; ++l) {
    st.h[l] = (p.hidden[l].W * (*in) + p.hidden[l].b).array().tanh();
    in = &st.h[l];
  }
  st.logits = p.output.W * (*in) + p.output.b;
  const double m = st.logits.maxCoeff();
  const double lse = m + std::log((st.logits.array() - m).exp().sum());
  st.log_probs = st.logits.array() - lse;
}

}  // namespace

double loss(const Params& params, const Example& example) {
  check_tokens(params.config, example.prompt_tokens, "prompt");
  check_tokens(params.config, example.response_tokens, "response");
  const int t_count = static_cast<int>(example.response_tokens.size());
  double total = 0.0;
  TokenList window;
  ForwardState st;
  for (int j = 0; j < t_count; ++j) {
    fill_window(params.config, example.prompt_tokens, example.response_tokens, j, window);
    forward_position(params, window, st);
    total -= st.log_probs(example.response_tokens[j]);
  }
  return total;
}

std::pair<PerExampleGradient, KfacStats> backward(const Params& params,
                                                  const Example& example,
                                                  const std::vector<int>& kfac_layers) {
  check_tokens(params.config, example.prompt_tokens, "prompt");
  check_tokens(params.config, example.response_tokens, "response");
  const ModelConfig& cfg = params.config;
  const int n_layers = cfg.num_mlp_layers;
  const int t_count = static_cast<int>(example.response_tokens.size());

  PerExampleGradient grad;
  grad.blocks = Params::zeros(cfg);
  grad.response_token_count = t_count;

  KfacStats stats;
  for (int idx : kfac_layers) {
    if (idx < 0 || idx > n_layers) throw input_error("kfac layer index out of range");
    stats.layers.push_back(KfacLayerStats{idx, {}, {}});
  }

  TokenList window;
  ForwardState st;
  for (int j = 0; j < t_count; ++j) {
    fill_window(cfg, example.prompt_tokens, example.response_tokens, j, window);
    forward_position(params, window, st);

    // dL/dlogits for -log p(target)
    Eigen::VectorXd dlogits = st.log_probs.array().exp();
    dlogits(example.response_tokens[j]) -= 1.0;

    const Eigen::VectorXd& top_in = n_layers > 0 ? st.h[n_layers - 1] : st.x0;
    grad.blocks.output.W.noalias() += dlogits * top_in.transpose();
    grad.blocks.output.b += dlogits;

    Eigen::VectorXd dh = params.output.W.transpose() * dlogits;
    std::vector<Eigen::VectorXd> ds(n_layers);
    for (int l = n_layers - 1; l >= 0; --l) {
      ds[l] = dh.array() * (1.0 - st.h[l].array().square());
      const Eigen::VectorXd& in = l == 0 ? st.x0 : st.h[l - 1];
      grad.blocks.hidden[l].W.noalias() += ds[l] * in.transpose();
      grad.blocks.hidden[l].b += ds[l];
      dh = params.hidden[l].W.transpose() * ds[l];
    }
    // dh now holds dL/dx0; scatter into the embedding rows of the window.
    for (int k = 0; k < cfg.context_window; ++k) {
      grad.blocks.embedding.row(window[k]) +=
          dh.segment(static_cast<Eigen::Index>(k) * cfg.embed_dim, cfg.embed_dim).transpose();
    }

    for (auto& ls : stats.layers) {
      const Eigen::VectorXd& in = ls.layer_index == 0
                                      ? st.x0
                                      : (ls.layer_index == n_layers
                                             ? st.h[n_layers - 1]
                                             : st.h[ls.layer_index - 1]);
      Eigen::VectorXd a(in.size() + 1);
      a << in, 1.0;
      ls.activations.push_back(std::move(a));
      ls.grads.push_back(ls.layer_index == n_layers ? dlogits : ds[ls.layer_index]);
    }
  }
  return {std::move(grad), std::move(stats)};
}

TokenList greedy_decode(const Params& params, const TokenList& prompt, int max_tokens) {
  check_tokens(params.config, prompt, "prompt");
  TokenList generated;
  TokenList window;
  ForwardState st;
  for (int j = 0; j < max_tokens; ++j) {
    fill_window(params.config, prompt, generated, j, window);
    forward_position(params, window, st);
    Eigen::Index best;
    st.logits.maxCoeff(&best);
    if (best == vocab::kEos) break;
    generated.push_back(static_cast<Token>(best));
  }
  return generated;
}

TokenList teacher_forced_argmax(const Params& params, const Example& example, Rng& rng) {
  check_tokens(params.config, example.prompt_tokens, "prompt");
  check_tokens(params.config, example.response_tokens, "response");
  TokenList preds;
  TokenList window;
  ForwardState st;
  for (int j = 0; j < static_cast<int>(example.response_tokens.size()); ++j) {
    fill_window(params.config, example.prompt_tokens, example.response_tokens, j, window);
    forward_position(params, window, st);
    const double m = st.logits.maxCoeff();
    std::vector<Token> ties;
    for (Eigen::Index i = 0; i < st.logits.size(); ++i) {
      if (st.logits(i) == m) ties.push_back(static_cast<Token>(i));
    }
    preds.push_back(ties[ties.size() == 1 ? 0 : rng.index(ties.size())]);
  }
  return preds;
}

namespace {

constexpr char kMagic[4] = {'G', 'D', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

void write_block(std::ostream& os, const Eigen::MatrixXd& m) {
  // row-major, little-endian f64
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double d = m(i, j);
      os.write(reinterpret_cast<const char*>(&d), sizeof(double));
    }
  }
}

void read_block(std::istream& is, Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double d;
      is.read(reinterpret_cast<char*>(&d), sizeof(double));
      m(i, j) = d;
    }
  }
}

void write_vec(std::ostream& os, const Eigen::VectorXd& v) {
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_vec(std::istream& is, Eigen::VectorXd& v) {
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_params(const Params& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  const ModelConfig& c = params.config;
  write_u32(os, static_cast<std::uint32_t>(c.vocab_size));
  write_u32(os, static_cast<std::uint32_t>(c.embed_dim));
  write_u32(os, static_cast<std::uint32_t>(c.context_window));
  write_u32(os, static_cast<std::uint32_t>(c.hidden_dim));
  write_u32(os, static_cast<std::uint32_t>(c.num_mlp_layers));
  write_block(os, params.embedding);
  for (const auto& layer : params.hidden) {
    write_block(os, layer.W);
    write_vec(os, layer.b);
  }
  write_block(os, params.output.W);
  write_vec(os, params.output.b);
  if (!os) throw io_error("write failed for " + path);
}

Params load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw io_error(path + ": bad magic");
  if (read_u32(is) != kVersion) throw io_error(path + ": unsupported version");
  ModelConfig c;
  c.vocab_size = static_cast<int>(read_u32(is));
  c.embed_dim = static_cast<int>(read_u32(is));
  c.context_window = static_cast<int>(read_u32(is));
  c.hidden_dim = static_cast<int>(read_u32(is));
  c.num_mlp_layers = static_cast<int>(read_u32(is));
  Params p = Params::zeros(c);
  read_block(is, p.embedding);
  for (auto& layer : p.hidden) {
    read_block(is, layer.W);
    read_vec(is, layer.b);
  }
  read_block(is, p.output.W);
  read_vec(is, p.output.b);
  if (!is) throw io_error(path + ": truncated file");
  return p;
}

}  // namespace gdig::toylm
