#include "gdig/curvature.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "gdig/error.hpp"
#include "gdig/parallel.hpp"

namespace gdig::curvature {

using gradfeat::LayerSelector;
using toylm::Example;
using toylm::Params;

KfacFactor accumulate(const std::vector<Example>& data, const Params& params,
                      const LayerSelector& sel) {
  if (data.empty()) throw input_error("accumulate: empty dataset");
  const std::vector<int> indices = sel.resolve(params.config);

  struct Partial {
    std::vector<Eigen::MatrixXd> A;
    std::vector<Eigen::MatrixXd> G;
    std::int64_t tokens = 0;
  };
  auto partials = parallel_map<Partial>(data.size(), [&](std::size_t i) {
    if (data[i].response_tokens.empty()) {
      throw input_error("accumulate: example '" + data[i].id + "' has an empty response");
    }
    auto [grad, stats] = toylm::backward(params, data[i], indices);
    Partial p;
    p.tokens = grad.response_token_count;
    p.A.reserve(stats.layers.size());
    p.G.reserve(stats.layers.size());
    for (const auto& ls : stats.layers) {
      const Eigen::Index in1 = ls.activations.front().size();
      const Eigen::Index out = ls.grads.front().size();
      Eigen::MatrixXd a_sum = Eigen::MatrixXd::Zero(in1, in1);
      Eigen::MatrixXd g_sum = Eigen::MatrixXd::Zero(out, out);
      for (std::size_t t = 0; t < ls.activations.size(); ++t) {
        a_sum.noalias() += ls.activations[t] * ls.activations[t].transpose();
        g_sum.noalias() += ls.grads[t] * ls.grads[t].transpose();
      }
      p.A.push_back(std::move(a_sum));
      p.G.push_back(std::move(g_sum));
    }
    return p;
  });

  KfacFactor out;
  out.layers.reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    LayerFactor lf;
    lf.layer_index = indices[k];
    lf.A = Eigen::MatrixXd::Zero(params.config.layer_in_dim(indices[k]) + 1,
                                 params.config.layer_in_dim(indices[k]) + 1);
    lf.G = Eigen::MatrixXd::Zero(params.config.layer_out_dim(indices[k]),
                                 params.config.layer_out_dim(indices[k]));
    out.layers.push_back(std::move(lf));
  }
  // Merge in example order, then per-token normalization.
  for (const auto& p : partials) {
    out.token_count += p.tokens;
    for (std::size_t k = 0; k < indices.size(); ++k) {
      out.layers[k].A += p.A[k];
      out.layers[k].G += p.G[k];
    }
  }
  const double inv_tokens = 1.0 / static_cast<double>(out.token_count);
  for (auto& lf : out.layers) {
    lf.A *= inv_tokens;
    lf.G *= inv_tokens;
    lf.A = (0.5 * (lf.A + lf.A.transpose())).eval();
    lf.G = (0.5 * (lf.G + lf.G.transpose())).eval();
  }
  return out;
}

namespace {

SymEigen clamped_eig(const Eigen::MatrixXd& m) {
  SymEigen eig = sym_eig(m);
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) < 0.0) eig.values(i) = 0.0;
  }
  return eig;
}

}  // namespace

DampedInverse prepare_inverse(const KfacFactor& factors, double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw input_error("prepare_inverse: lambda must be positive and finite");
  }
  DampedInverse inv;
  inv.lambda = lambda;
  inv.layers.reserve(factors.layers.size());
  for (const auto& lf : factors.layers) {
    inv.layers.push_back(LayerInverse{lf.layer_index, clamped_eig(lf.A), clamped_eig(lf.G)});
  }
  return inv;
}

std::int64_t inverse_dim(const DampedInverse& inv) {
  std::int64_t dim = 0;
  for (const auto& layer : inv.layers) {
    dim += layer.G.values.size() * layer.A.values.size();
  }
  return dim;
}

Eigen::VectorXd ihvp(const DampedInverse& inv, const Eigen::VectorXd& grad) {
  if (grad.size() != inverse_dim(inv)) {
    throw shape_error("ihvp: gradient dim does not match inverse");
  }
  Eigen::VectorXd result(grad.size());
  Eigen::Index offset = 0;
  for (const auto& layer : inv.layers) {
    const Eigen::Index out = layer.G.values.size();
    const Eigen::Index in1 = layer.A.values.size();
    // Row-major flattened block [W | b] is out x (in+1).
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        block(grad.data() + offset, out, in1);
    Eigen::MatrixXd m = layer.G.vectors.transpose() * block * layer.A.vectors;
    for (Eigen::Index i = 0; i < out; ++i) {
      for (Eigen::Index j = 0; j < in1; ++j) {
        m(i, j) /= layer.G.values(i) * layer.A.values(j) + inv.lambda;
      }
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x =
        layer.G.vectors * m * layer.A.vectors.transpose();
    std::memcpy(result.data() + offset, x.data(), sizeof(double) * x.size());
    offset += out * in1;
  }
  return result;
}

Eigen::VectorXd ihvp(const DampedInverse& inv, const Eigen::VectorXf& grad) {
  return ihvp(inv, grad.cast<double>().eval());
}

Eigen::MatrixXd dense_efim(const std::vector<Example>& data, const Params& params,
                           const LayerSelector& sel) {
  if (data.empty()) throw input_error("dense_efim: empty dataset");
  const std::int64_t dim = sel.feature_dim(params.config);
  if (dim > 5000) {
    throw size_error("dense_efim: selected parameter count " + std::to_string(dim) +
                     " exceeds the 5000 guard");
  }
  const std::vector<int> indices = sel.resolve(params.config);
  Eigen::MatrixXd fisher = Eigen::MatrixXd::Zero(dim, dim);
  for (const Example& ex : data) {
    auto [grad, stats] = toylm::backward(params, ex);
    Eigen::VectorXd v(dim);
    Eigen::Index offset = 0;
    for (int idx : indices) {
      const toylm::DenseLayer& block = grad.blocks.selectable_layer(idx);
      for (Eigen::Index i = 0; i < block.W.rows(); ++i) {
        for (Eigen::Index j = 0; j < block.W.cols(); ++j) v(offset++) = block.W(i, j);
        v(offset++) = block.b(i);
      }
    }
    fisher.noalias() += v * v.transpose();
  }
  fisher /= static_cast<double>(data.size());
  return 0.5 * (fisher + fisher.transpose());
}

namespace {

constexpr char kMagic[4] = {'G', 'K', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  auto u = static_cast<std::uint64_t>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

void write_mat(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double d = m(i, j);
      os.write(reinterpret_cast<const char*>(&d), sizeof(double));
    }
  }
}

void read_mat(std::istream& is, Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double d;
      is.read(reinterpret_cast<char*>(&d), sizeof(double));
      m(i, j) = d;
    }
  }
}

}  // namespace

void save_factors(const KfacFactor& factors, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(factors.layers.size()));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(factors.token_count));
  for (const auto& lf : factors.layers) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(lf.layer_index));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(lf.A.rows()));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(lf.G.rows()));
    write_mat(os, lf.A);
    write_mat(os, lf.G);
  }
  if (!os) throw io_error("write failed for " + path);
}

KfacFactor load_factors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw io_error(path + ": bad magic");
  if (read_le<std::uint32_t>(is) != kVersion) throw io_error(path + ": unsupported version");
  KfacFactor factors;
  const auto n_layers = read_le<std::uint32_t>(is);
  factors.token_count = static_cast<std::int64_t>(read_le<std::uint64_t>(is));
  factors.layers.resize(n_layers);
  for (auto& lf : factors.layers) {
    lf.layer_index = static_cast<int>(read_le<std::uint32_t>(is));
    const auto a_dim = read_le<std::uint32_t>(is);
    const auto g_dim = read_le<std::uint32_t>(is);
    lf.A.resize(a_dim, a_dim);
    lf.G.resize(g_dim, g_dim);
    read_mat(is, lf.A);
    read_mat(is, lf.G);
  }
  if (!is) throw io_error(path + ": truncated file");
  return factors;
}

}  // namespace gdig::curvature
