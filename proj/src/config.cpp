#include "gdig/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gdig/error.hpp"

namespace gdig::config {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

IniFile IniFile::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config " + path);
  std::ostringstream buffer;
  buffer << is.rdbuf();
  return parse_text(buffer.str());
}

IniFile IniFile::parse_text(const std::string& text) {
  IniFile ini;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw input_error("config line " + std::to_string(line_no) + ": unterminated section");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw input_error("config line " + std::to_string(line_no) + ": expected key=value");
    }
    ini.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return ini;
}

bool IniFile::has(const std::string& section, const std::string& key) const {
  return values_.count(section + "." + key) > 0;
}

std::string IniFile::get(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
  auto it = values_.find(section + "." + key);
  return it == values_.end() ? fallback : it->second;
}

double IniFile::get_double(const std::string& section, const std::string& key,
                           double fallback) const {
  auto it = values_.find(section + "." + key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw input_error("config " + section + "." + key + ": not a number: " + it->second);
  }
}

std::int64_t IniFile::get_int(const std::string& section, const std::string& key,
                              std::int64_t fallback) const {
  auto it = values_.find(section + "." + key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (const std::exception&) {
    throw input_error("config " + section + "." + key + ": not an integer: " + it->second);
  }
}

void IniFile::set(const std::string& section, const std::string& key,
                  const std::string& value) {
  values_[section + "." + key] = value;
}

std::uint64_t IniFile::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [key, value] : values_) {  // std::map iterates sorted
    feed(key);
    feed("=");
    feed(value);
    feed("\n");
  }
  return h;
}

gradfeat::LayerSelector parse_selector(const std::string& text) {
  if (text == "final_only") return gradfeat::LayerSelector::final_only();
  if (text.rfind("stride:", 0) == 0) {
    return gradfeat::LayerSelector::strided(std::stoi(text.substr(7)));
  }
  if (text.rfind("explicit:", 0) == 0) {
    std::vector<int> layers;
    std::istringstream is(text.substr(9));
    std::string item;
    while (std::getline(is, item, ',')) layers.push_back(std::stoi(item));
    return gradfeat::LayerSelector::explicit_layers(std::move(layers));
  }
  throw input_error("unknown layer selector: " + text);
}

PipelineConfig PipelineConfig::from_ini(const IniFile& ini) {
  PipelineConfig cfg;
  cfg.candidates_path = ini.get("data", "candidates", "");
  cfg.seeds_path = ini.get("data", "seeds", "");
  cfg.valid_path = ini.get("data", "valid", "");
  cfg.test_path = ini.get("data", "test", "");

  cfg.model.embed_dim = static_cast<int>(ini.get_int("model", "embed_dim", 16));
  cfg.model.context_window = static_cast<int>(ini.get_int("model", "context_window", 8));
  cfg.model.hidden_dim = static_cast<int>(ini.get_int("model", "hidden_dim", 32));
  cfg.model.num_mlp_layers = static_cast<int>(ini.get_int("model", "num_mlp_layers", 4));
  cfg.model.validate();
  cfg.init_scale = ini.get_double("model", "init_scale", 0.1);

  cfg.train.learning_rate = ini.get_double("train", "learning_rate", 1e-3);
  cfg.train.epochs = static_cast<int>(ini.get_int("train", "epochs", 3));
  cfg.train.batch_size = static_cast<int>(ini.get_int("train", "batch_size", 64));
  cfg.train.eval_every_steps =
      static_cast<int>(ini.get_int("train", "eval_every_steps", 10));
  const std::string opt = ini.get("train", "optimizer", "sgd");
  if (opt == "sgd") {
    cfg.train.optimizer = finetune::Optimizer::kSgd;
  } else if (opt == "adam") {
    cfg.train.optimizer = finetune::Optimizer::kAdam;
  } else {
    throw input_error("train.optimizer must be sgd or adam, got " + opt);
  }
  cfg.train.validate();

  cfg.lambda = ini.get_double("influence", "lambda", 1e-3);
  cfg.influence_selector = parse_selector(ini.get("influence", "selector", "stride:3"));
  cfg.diversity_selector = parse_selector(ini.get("diversity", "selector", "final_only"));
  const std::string quality_mode = ini.get("influence", "quality_mode", "strict");
  if (quality_mode == "strict") {
    cfg.quality = select::QualityCriterion::strict();
  } else if (quality_mode == "fraction") {
    cfg.quality =
        select::QualityCriterion::fraction(ini.get_double("influence", "tau", 0.9));
  } else {
    throw input_error("influence.quality_mode must be strict or fraction");
  }

  cfg.k_clusters = static_cast<int>(ini.get_int("diversity", "k_clusters", 0));
  cfg.proj_dim = static_cast<int>(ini.get_int("diversity", "proj_dim", 0));
  cfg.n_select = static_cast<std::size_t>(ini.get_int("diversity", "n_select", 0));

  cfg.seed = static_cast<std::uint64_t>(ini.get_int("run", "seed", 0));
  cfg.train.seed = static_cast<std::uint64_t>(ini.get_int("train", "seed",
                                                          static_cast<std::int64_t>(cfg.seed)));
  cfg.out_dir = ini.get("run", "out_dir", "out");
  cfg.config_hash = ini.hash();
  return cfg;
}

void PipelineConfig::validate_paths() const {
  for (const auto& [name, path] :
       {std::pair<std::string, std::string>{"candidates", candidates_path},
        {"seeds", seeds_path},
        {"valid", valid_path}}) {
    if (path.empty()) throw input_error("data." + name + " is required");
    if (!std::filesystem::exists(path)) {
      throw input_error("data." + name + ": no such file: " + path);
    }
  }
  if (!test_path.empty() && !std::filesystem::exists(test_path)) {
    throw input_error("data.test: no such file: " + test_path);
  }
}

int PipelineConfig::effective_k_clusters(std::size_t pool) const {
  if (k_clusters > 0) return k_clusters;
  // Paper-scale default 512, scaled down so small pools keep >= 4
  // members per cluster on average.
  const int derived = static_cast<int>(pool / 4);
  return std::max(1, std::min(512, derived));
}

int PipelineConfig::effective_proj_dim(std::int64_t feature_dim) const {
  if (proj_dim > 0) return proj_dim;
  return static_cast<int>(std::min<std::int64_t>(400, feature_dim));
}

}  // namespace gdig::config
