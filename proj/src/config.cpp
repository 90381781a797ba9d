#include "hhkg/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace hhkg {

namespace {

enum class Kind { kString, kSize, kReal, kBool, kSizeList, kChoice };

struct KeySpec {
  const char* key;
  const char* default_value;
  Kind kind;
  std::vector<std::string> choices = {};
  bool echoed = true;
};

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> specs = {
      {"run.seed", "0", Kind::kSize},
      {"run.jobs", "1", Kind::kSize, {}, false},
      {"run.out", "out", Kind::kString, {}, false},
      {"run.fold", "0", Kind::kSize},
      {"data.triples", "", Kind::kString},
      {"data.node_types", "", Kind::kString},
      {"data.semantic", "", Kind::kString},
      {"data.structural", "", Kind::kString},
      {"data.labels", "", Kind::kString},
      {"data.hypergraph", "", Kind::kString},
      {"data.grouping", "relation-item", Kind::kChoice, {"relation", "relation-item", "relation-and-item"}},
      {"model.hidden", "20", Kind::kSize},
      {"model.heads", "4", Kind::kSize},
      {"model.layers", "1", Kind::kSize},
      {"model.type_dim", "20", Kind::kSize},
      {"model.dropout", "0.3", Kind::kReal},
      {"model.chunk", "2000", Kind::kSize},
      {"model.ffn_on_attended", "false", Kind::kBool},
      {"model.channels", "full", Kind::kChoice, {"full", "structural", "semantic", "concat"}},
      {"model.eta_learnable", "true", Kind::kBool},
      {"model.eta1", "0.3", Kind::kReal},
      {"model.tau", "0.5", Kind::kReal},
      {"model.tau_learnable", "true", Kind::kBool},
      {"model.raw_dot", "false", Kind::kBool},
      {"train.lr", "0.005", Kind::kReal},
      {"train.weight_decay", "0.0005", Kind::kReal},
      {"train.max_epochs", "10000", Kind::kSize},
      {"train.patience", "2000", Kind::kSize},
      {"train.contrastive_batch", "2000", Kind::kSize},
      {"train.alpha", "0.1", Kind::kReal},
      {"train.beta", "0.2", Kind::kReal},
      {"train.loss_ablation", "none", Kind::kChoice, {"none", "no_contrastive", "no_unimodal", "no_both"}},
      {"train.folds", "3", Kind::kSize},
      {"train.protocol", "cv", Kind::kChoice, {"cv", "holdout"}},
      {"train.ratio_train", "7", Kind::kReal},
      {"train.ratio_val", "1", Kind::kReal},
      {"train.ratio_test", "2", Kind::kReal},
      {"eval.ks", "20,50,100,200", Kind::kSizeList},
      {"eval.split", "test", Kind::kChoice, {"train", "val", "test"}},
      {"bench.chunks", "10,100,1000", Kind::kSizeList},
      {"bench.repeats", "3", Kind::kSize},
      {"bench.dense", "true", Kind::kBool},
      {"bench.nodes", "512", Kind::kSize},
      {"bench.edges", "256", Kind::kSize},
      {"bench.density", "0.01", Kind::kReal},
      {"bench.types", "4", Kind::kSize},
      {"bench.feature_dim", "16", Kind::kSize},
      {"synth.users", "200", Kind::kSize},
      {"synth.items", "100", Kind::kSize},
      {"synth.relations", "5", Kind::kSize},
      {"synth.avg_degree", "5", Kind::kReal},
      {"synth.semantic_dim", "16", Kind::kSize},
      {"synth.semantic_noise", "1", Kind::kReal},
      {"synth.label_noise", "0.1", Kind::kReal},
  };
  return specs;
}

const KeySpec* find_spec(const std::string& key) {
  for (const auto& s : schema()) {
    if (key == s.key) return &s;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_size(const std::string& s, std::size_t& out) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) return false;
  char* end = nullptr;
  out = std::strtoull(s.c_str(), &end, 10);
  return *end == '\0';
}

bool parse_real(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return *end == '\0' && std::isfinite(out);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) parts.push_back(trim(item));
  return parts;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& s : schema()) values_[s.key] = s.default_value;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& s : schema()) out.emplace_back(s.key);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const KeySpec* spec = find_spec(key);
  if (!spec) throw UsageError("unknown config key '" + key + "'");
  const std::string value = trim(raw);
  std::size_t n = 0;
  double d = 0.0;
  switch (spec->kind) {
    case Kind::kString: break;
    case Kind::kSize:
      if (!parse_size(value, n)) throw UsageError(key + ": expected a nonnegative integer, got '" + value + "'");
      break;
    case Kind::kReal:
      if (!parse_real(value, d)) throw UsageError(key + ": expected a number, got '" + value + "'");
      break;
    case Kind::kBool:
      if (value != "true" && value != "false") throw UsageError(key + ": expected true or false");
      break;
    case Kind::kSizeList:
      for (const auto& item : split_list(value)) {
        if (!parse_size(item, n) || n == 0) throw UsageError(key + ": expected a list of positive integers");
      }
      break;
    case Kind::kChoice:
      if (std::find(spec->choices.begin(), spec->choices.end(), value) == spec->choices.end()) {
        std::string all;
        for (const auto& c : spec->choices) all += (all.empty() ? "" : " | ") + c;
        throw UsageError(key + ": expected one of " + all + ", got '" + value + "'");
      }
      break;
  }
  values_[key] = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::parse(std::istream& in, const std::string& source) {
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw UsageError(source + ":" + std::to_string(line_no) + ": bad section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": expected `key = value`");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.find('.') == std::string::npos) {
      if (section.empty()) {
        throw UsageError(source + ":" + std::to_string(line_no) + ": key '" + key +
                         "' outside any [section]");
      }
      key = section + "." + key;
    }
    try {
      set(key, t.substr(eq + 1));
    } catch (const UsageError& e) {
      throw UsageError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  RunConfig c;
  c.parse(in, path.string());
  return c;
}

RunConfig RunConfig::from_echo(const std::string& echo) {
  std::istringstream in(echo);
  RunConfig c;
  c.parse(in, "config echo");
  return c;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const { return std::strtod(get(key).c_str(), nullptr); }

std::size_t RunConfig::get_size(const std::string& key) const {
  return std::strtoull(get(key).c_str(), nullptr, 10);
}

bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }

std::vector<std::size_t> RunConfig::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(get(key))) out.push_back(std::strtoull(item.c_str(), nullptr, 10));
  return out;
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  for (const auto& s : schema()) {
    if (s.echoed) os << s.key << " = " << values_.at(s.key) << '\n';
  }
  return os.str();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.hidden = get_size("model.hidden");
  m.heads = get_size("model.heads");
  m.layers = get_size("model.layers");
  m.type_dim = get_size("model.type_dim");
  m.attn_dropout = get_double("model.dropout");
  m.chunk = get_size("model.chunk");
  m.ffn_on_attended = get_bool("model.ffn_on_attended");
  m.channels = parse_channel_mode(get("model.channels"));
  m.eta_learnable = get_bool("model.eta_learnable");
  m.eta1 = get_double("model.eta1");
  m.tau = get_double("model.tau");
  m.tau_learnable = get_bool("model.tau_learnable");
  m.raw_dot = get_bool("model.raw_dot");
  if (m.hidden == 0 || m.heads == 0 || m.layers == 0 || m.type_dim == 0 || m.chunk == 0) {
    throw UsageError("model sizes must be positive");
  }
  if (m.hidden % m.heads != 0) throw UsageError("model.hidden must be divisible by model.heads");
  if (m.attn_dropout < 0.0 || m.attn_dropout >= 1.0) throw UsageError("model.dropout must be in [0, 1)");
  if (m.eta1 <= 0.0 || m.eta1 >= 1.0) throw UsageError("model.eta1 must be in (0, 1)");
  if (m.tau <= 0.0) throw UsageError("model.tau must be positive");
  return m;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.adam.lr = get_double("train.lr");
  t.adam.weight_decay = get_double("train.weight_decay");
  t.max_epochs = get_size("train.max_epochs");
  t.patience = get_size("train.patience");
  t.contrastive_batch = get_size("train.contrastive_batch");
  t.weights.alpha = get_double("train.alpha");
  t.weights.beta = get_double("train.beta");
  const std::string& ablation = get("train.loss_ablation");
  if (ablation == "no_contrastive" || ablation == "no_both") t.weights.alpha = 0.0;
  if (ablation == "no_unimodal" || ablation == "no_both") t.weights.beta = 0.0;
  t.seed = seed();
  if (t.adam.lr < 0.0 || t.adam.weight_decay < 0.0) throw UsageError("train.lr and weight_decay must be >= 0");
  if (t.weights.alpha < 0.0 || t.weights.beta < 0.0) throw UsageError("train.alpha and beta must be >= 0");
  if (t.max_epochs == 0 || t.patience == 0 || t.patience > t.max_epochs) {
    throw UsageError("need 1 <= train.patience <= train.max_epochs");
  }
  if (t.contrastive_batch == 0) throw UsageError("train.contrastive_batch must be positive");
  return t;
}

SplitRatios RunConfig::split_ratios() const {
  SplitRatios r{get_double("train.ratio_train"), get_double("train.ratio_val"),
                get_double("train.ratio_test")};
  if (r.train <= 0.0 || r.val <= 0.0 || r.test <= 0.0) throw UsageError("split ratios must be positive");
  return r;
}

SyntheticConfig RunConfig::synthetic_config() const {
  SyntheticConfig s;
  s.n_users = get_size("synth.users");
  s.n_items = get_size("synth.items");
  s.n_relations = get_size("synth.relations");
  s.avg_degree = get_double("synth.avg_degree");
  s.semantic_dim = get_size("synth.semantic_dim");
  s.semantic_noise = get_double("synth.semantic_noise");
  s.label_noise = get_double("synth.label_noise");
  s.grouping = grouping();
  s.seed = seed();
  if (s.n_users == 0 || s.n_items == 0 || s.n_relations == 0 || s.semantic_dim == 0) {
    throw UsageError("synth counts must be >= 1");
  }
  if (s.avg_degree <= 0.0) throw UsageError("synth.avg_degree must be positive");
  return s;
}

BenchConfig RunConfig::bench_config() const {
  BenchConfig b;
  b.sahgt = model_config().sahgt();
  b.chunks = get_sizes("bench.chunks");
  b.repeats = get_size("bench.repeats");
  b.dense = get_bool("bench.dense");
  b.seed = seed();
  if (b.chunks.empty()) throw UsageError("bench.chunks must not be empty");
  return b;
}

Grouping RunConfig::grouping() const { return parse_grouping(get("data.grouping")); }

std::uint64_t RunConfig::seed() const { return get_size("run.seed"); }

}  // namespace hhkg
