#include "rrnet/config.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "rrnet/errors.hpp"
#include "rrnet/frame.hpp"

namespace rrnet {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <typename T>
T parse_number(const std::string& value, const std::string& where) {
  std::istringstream in(value);
  T out;
  in >> out;
  if (in.fail() || !(in >> std::ws).eof()) {
    throw ConfigError(where + ": cannot parse value '" + value + "'");
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"var_threshold", [](RunConfig& c, const std::string& v, const std::string& w) { c.var_threshold = parse_number<double>(v, w); }},
      {"max_block", [](RunConfig& c, const std::string& v, const std::string& w) { c.max_block = parse_number<int>(v, w); }},
      {"min_block", [](RunConfig& c, const std::string& v, const std::string& w) { c.min_block = parse_number<int>(v, w); }},
      {"patch_stride", [](RunConfig& c, const std::string& v, const std::string& w) { c.patch_stride = parse_number<int>(v, w); }},
      {"batch_size", [](RunConfig& c, const std::string& v, const std::string& w) { c.batch_size = parse_number<int>(v, w); }},
      {"base_lr", [](RunConfig& c, const std::string& v, const std::string& w) { c.base_lr = parse_number<double>(v, w); }},
      {"lr_gamma", [](RunConfig& c, const std::string& v, const std::string& w) { c.lr_gamma = parse_number<double>(v, w); }},
      {"lr_interval_epochs", [](RunConfig& c, const std::string& v, const std::string& w) { c.lr_interval_epochs = parse_number<int>(v, w); }},
      {"total_epochs", [](RunConfig& c, const std::string& v, const std::string& w) { c.total_epochs = parse_number<int>(v, w); }},
      {"finetune_epochs", [](RunConfig& c, const std::string& v, const std::string& w) { c.finetune_epochs = parse_number<int>(v, w); }},
      {"weight_decay", [](RunConfig& c, const std::string& v, const std::string& w) { c.weight_decay = parse_number<double>(v, w); }},
      {"adam_beta1", [](RunConfig& c, const std::string& v, const std::string& w) { c.adam_beta1 = parse_number<double>(v, w); }},
      {"adam_beta2", [](RunConfig& c, const std::string& v, const std::string& w) { c.adam_beta2 = parse_number<double>(v, w); }},
      {"adam_epsilon", [](RunConfig& c, const std::string& v, const std::string& w) { c.adam_epsilon = parse_number<double>(v, w); }},
      {"seed", [](RunConfig& c, const std::string& v, const std::string& w) { c.seed = parse_number<std::uint64_t>(v, w); }},
      {"stem_channels", [](RunConfig& c, const std::string& v, const std::string& w) { c.stem_channels = parse_number<int>(v, w); }},
      {"block_channels", [](RunConfig& c, const std::string& v, const std::string& w) { c.block_channels = parse_number<int>(v, w); }},
      {"tile_size", [](RunConfig& c, const std::string& v, const std::string& w) { c.tile_size = parse_number<int>(v, w); }},
      {"tile_overlap", [](RunConfig& c, const std::string& v, const std::string& w) { c.tile_overlap = parse_number<int>(v, w); }},
  };
  return table;
}

std::string nearest_key(const std::string& key) {
  std::string best;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (const auto& [k, fn] : setters()) {
    const std::size_t d = edit_distance(key, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

void RunConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) {
      throw ConfigError(std::string("config: ") + name + " must be positive");
    }
  };
  if (var_threshold < 0) throw ConfigError("config: var_threshold must be >= 0");
  auto block_ok = [](int b) { return b == 4 || b == 8 || b == 16 || b == 32; };
  if (!block_ok(max_block) || !block_ok(min_block) || min_block > max_block) {
    throw ConfigError("config: block sizes must be in {4,8,16,32} with min <= max");
  }
  positive(patch_stride, "patch_stride");
  positive(batch_size, "batch_size");
  positive(base_lr, "base_lr");
  positive(lr_gamma, "lr_gamma");
  positive(lr_interval_epochs, "lr_interval_epochs");
  positive(total_epochs, "total_epochs");
  if (finetune_epochs < 0) throw ConfigError("config: finetune_epochs must be >= 0");
  if (weight_decay < 0) throw ConfigError("config: weight_decay must be >= 0");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
    throw ConfigError("config: adam betas must lie in [0, 1)");
  }
  positive(adam_epsilon, "adam_epsilon");
  positive(stem_channels, "stem_channels");
  positive(block_channels, "block_channels");
  positive(tile_size, "tile_size");
  if (tile_overlap < 0 || tile_overlap >= tile_size) {
    throw ConfigError("config: tile_overlap must lie in [0, tile_size)");
  }
  if (tile_size % 4 != 0) {
    throw ConfigError("config: tile_size must be divisible by 4");
  }
}

RunConfig parse_config(std::istream& in, const std::string& source_name) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source_name + ":" + std::to_string(line_no);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
    auto it = setters().find(key);
    if (it == setters().end()) {
      throw ConfigError(where + ": unknown key '" + key + "' (did you mean '" +
                        nearest_key(key) + "'?)");
    }
    it->second(cfg, value, where);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::istringstream in(read_file_bytes(path));
  return parse_config(in, path.filename().string());
}

}  // namespace rrnet
