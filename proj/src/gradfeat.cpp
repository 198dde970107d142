#include "gdig/gradfeat.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gdig/error.hpp"
#include "gdig/parallel.hpp"

namespace gdig::gradfeat {

using toylm::Example;
using toylm::Params;

LayerSelector LayerSelector::explicit_layers(std::vector<int> layers) {
  LayerSelector sel;
  sel.mode = SelectorMode::kExplicit;
  sel.layers = std::move(layers);
  return sel;
}

LayerSelector LayerSelector::strided(int stride) {
  LayerSelector sel;
  sel.mode = SelectorMode::kStride;
  sel.stride = stride;
  return sel;
}

LayerSelector LayerSelector::final_only() {
  LayerSelector sel;
  sel.mode = SelectorMode::kFinalOnly;
  return sel;
}

std::vector<int> LayerSelector::resolve(const toylm::ModelConfig& cfg) const {
  const int max_idx = cfg.num_selectable_layers() - 1;
  std::vector<int> out;
  switch (mode) {
    case SelectorMode::kExplicit:
      out = layers;
      break;
    case SelectorMode::kStride: {
      if (stride < 1) throw input_error("LayerSelector: stride must be >= 1");
      for (int i = 0; i <= max_idx; i += stride) out.push_back(i);
      break;
    }
    case SelectorMode::kFinalOnly:
      out.push_back(max_idx);
      break;
  }
  if (out.empty()) throw input_error("LayerSelector: empty selection");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  for (int idx : out) {
    if (idx < 0 || idx > max_idx) {
      throw input_error("LayerSelector: layer index " + std::to_string(idx) +
                        " out of range");
    }
  }
  return out;
}

std::int64_t LayerSelector::feature_dim(const toylm::ModelConfig& cfg) const {
  std::int64_t dim = 0;
  for (int idx : resolve(cfg)) dim += cfg.layer_param_count(idx);
  return dim;
}

std::string LayerSelector::describe() const {
  std::ostringstream os;
  switch (mode) {
    case SelectorMode::kExplicit: {
      os << "explicit:";
      for (std::size_t i = 0; i < layers.size(); ++i) os << (i ? "," : "") << layers[i];
      break;
    }
    case SelectorMode::kStride:
      os << "stride:" << stride;
      break;
    case SelectorMode::kFinalOnly:
      os << "final_only";
      break;
  }
  return os.str();
}

namespace {

// Flatten one layer block of a gradient as row-major [W | b], scaled.
void flatten_layer(const toylm::DenseLayer& block, double scale, float* out) {
  const Eigen::Index rows = block.W.rows();
  const Eigen::Index cols = block.W.cols();
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      *out++ = static_cast<float>(scale * block.W(i, j));
    }
    *out++ = static_cast<float>(scale * block.b(i));
  }
}

}  // namespace

FeatureVector extract(const Params& params, const Example& example,
                      const LayerSelector& sel) {
  if (example.response_tokens.empty()) {
    throw input_error("extract: example '" + example.id + "' has an empty response");
  }
  auto [grad, stats] = toylm::backward(params, example);
  const double scale = 1.0 / static_cast<double>(grad.response_token_count);
  const std::vector<int> indices = sel.resolve(params.config);

  FeatureVector fv;
  fv.id = example.id;
  fv.values.resize(sel.feature_dim(params.config));
  float* out = fv.values.data();
  for (int idx : indices) {
    const toylm::DenseLayer& block = grad.blocks.selectable_layer(idx);
    flatten_layer(block, scale, out);
    out += params.config.layer_param_count(idx);
  }
  return fv;
}

FeatureVector GradCache::feature(std::int64_t row) const {
  if (row < 0 || row >= count()) throw input_error("GradCache: row out of range");
  FeatureVector fv;
  fv.id = ids[static_cast<std::size_t>(row)];
  fv.values = rows.row(row).transpose();
  return fv;
}

GradCache batch_extract(const Params& params, const std::vector<Example>& data,
                        const LayerSelector& sel, const std::string& path) {
  GradCache cache;
  cache.selector = sel;
  cache.dim = sel.feature_dim(params.config);
  cache.ids.resize(data.size());
  cache.rows.resize(static_cast<Eigen::Index>(data.size()), cache.dim);
  parallel_for(data.size(), [&](std::size_t i) {
    FeatureVector fv = extract(params, data[i], sel);
    cache.ids[i] = fv.id;
    cache.rows.row(static_cast<Eigen::Index>(i)) = fv.values.transpose();
  });
  save_cache(cache, path);
  return cache;
}

namespace {

constexpr char kMagic[4] = {'G', 'D', 'I', 'G'};
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

}  // namespace

void save_cache(const GradCache& cache, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  os.write(kMagic, 4);
  write_le<std::uint32_t>(os, kVersion);
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(cache.count()));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(cache.dim));
  write_le<std::uint8_t>(os, static_cast<std::uint8_t>(cache.selector.mode));
  const std::vector<int>& layers =
      cache.selector.mode == SelectorMode::kStride
          ? std::vector<int>{cache.selector.stride}
          : cache.selector.layers;
  write_le<std::uint16_t>(os, static_cast<std::uint16_t>(layers.size()));
  for (int l : layers) write_le<std::uint16_t>(os, static_cast<std::uint16_t>(l));
  os.write(reinterpret_cast<const char*>(cache.rows.data()),
           static_cast<std::streamsize>(sizeof(float) * cache.rows.size()));
  if (!os) throw io_error("write failed for " + path);

  std::ofstream ids(path + ".ids.jsonl");
  if (!ids) throw io_error("cannot open " + path + ".ids.jsonl for writing");
  for (std::size_t i = 0; i < cache.ids.size(); ++i) {
    nlohmann::json rec = {{"row", i}, {"id", cache.ids[i]}};
    ids << rec.dump() << "\n";
  }
}

GradCache load_cache(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw io_error(path + ": bad magic");
  if (read_le<std::uint32_t>(is) != kVersion) throw io_error(path + ": unsupported version");
  GradCache cache;
  const auto count = read_le<std::uint64_t>(is);
  cache.dim = static_cast<std::int64_t>(read_le<std::uint64_t>(is));
  cache.selector.mode = static_cast<SelectorMode>(read_le<std::uint8_t>(is));
  const auto n_layers = read_le<std::uint16_t>(is);
  std::vector<int> layers(n_layers);
  for (auto& l : layers) l = read_le<std::uint16_t>(is);
  if (cache.selector.mode == SelectorMode::kStride) {
    cache.selector.stride = layers.empty() ? 1 : layers[0];
  } else {
    cache.selector.layers = layers;
  }
  cache.rows.resize(static_cast<Eigen::Index>(count), cache.dim);
  is.read(reinterpret_cast<char*>(cache.rows.data()),
          static_cast<std::streamsize>(sizeof(float) * cache.rows.size()));
  if (!is) throw io_error(path + ": truncated file");

  std::ifstream ids(path + ".ids.jsonl");
  if (!ids) throw io_error("missing id sidecar for " + path);
  cache.ids.resize(count);
  std::string line;
  std::size_t seen = 0;
  while (std::getline(ids, line)) {
    if (line.empty()) continue;
    nlohmann::json rec = nlohmann::json::parse(line);
    const std::size_t row = rec.at("row").get<std::size_t>();
    if (row >= count) throw io_error(path + ": sidecar row out of range");
    cache.ids[row] = rec.at("id").get<std::string>();
    ++seen;
  }
  if (seen != count) throw io_error(path + ": sidecar count mismatch");
  return cache;
}

}  // namespace gdig::gradfeat
