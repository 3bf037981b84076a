#include "stsparse/config.hpp"

#include <fstream>
#include <sstream>

#include "stsparse/metrics.hpp"

namespace stsparse {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty())
      throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    if (cfg.entries_.contains(key))
      throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    cfg.entries_[key] = {value, source + ":" + std::to_string(line_no)};
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.string());
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = {value, "command line"};
}

const KeyValueConfig::Entry* KeyValueConfig::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  it->second.used = true;
  return &it->second;
}

void KeyValueConfig::bad(const std::string& key, const std::string& expected) const {
  const Entry& e = entries_.at(key);
  throw ConfigError(e.origin + ": '" + key + "' expects " + expected + ", got '" + e.value + "'");
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double KeyValueConfig::get(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    return parse_double(e->value);
  } catch (const std::exception&) {
    bad(key, "a number");
  }
}

int KeyValueConfig::get(const std::string& key, int fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    std::size_t used = 0;
    const int v = std::stoi(e->value, &used);
    if (used == e->value.size()) return v;
  } catch (const std::exception&) {
  }
  bad(key, "an integer");
}

std::uint64_t KeyValueConfig::get(const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  try {
    std::size_t used = 0;
    if (!e->value.empty() && e->value[0] != '-') {
      const auto v = std::stoull(e->value, &used);
      if (used == e->value.size()) return v;
    }
  } catch (const std::exception&) {
  }
  bad(key, "a non-negative integer");
}

bool KeyValueConfig::get(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "on") return true;
  if (e->value == "false" || e->value == "0" || e->value == "off") return false;
  bad(key, "true or false");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const {
  const Entry* e = find(key);
  return e ? split_list(e->value) : fallback;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key,
                                                const std::vector<double>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(e->value)) {
    try {
      out.push_back(parse_double(item));
    } catch (const std::exception&) {
      bad(key, "a comma-separated list of numbers");
    }
  }
  return out;
}

void KeyValueConfig::check_all_used() const {
  std::string unknown;
  for (const auto& [key, e] : entries_)
    if (!e.used) unknown += " " + key + " (" + e.origin + ")";
  if (!unknown.empty()) throw ConfigError("unknown config keys:" + unknown);
}

RunSettings settings_from(const KeyValueConfig& cfg) {
  RunSettings s;
  s.gcn.layers = cfg.get("model.layers", s.gcn.layers);
  s.gcn.hidden = cfg.get("model.hidden", s.gcn.hidden);
  s.gcn.dropout_p = cfg.get("model.dropout", s.gcn.dropout_p);

  auto& sp = s.st_sparse.sparse;
  s.st_sparse.layers = cfg.get("sparse.layers", s.st_sparse.layers);
  s.st_sparse.dropout_p = cfg.get("sparse.dropout", s.st_sparse.dropout_p);
  sp.d_h = cfg.get("sparse.d_h", sp.d_h);
  sp.alpha = cfg.get("sparse.alpha", sp.alpha);
  sp.gamma = cfg.get("sparse.gamma", sp.gamma);
  sp.tau = cfg.get("sparse.tau", sp.tau);
  sp.temporal_enabled = cfg.get("sparse.temporal", sp.temporal_enabled);
  if (cfg.has("sparse.duty_decay")) sp.duty_decay = cfg.get("sparse.duty_decay", 1.0);

  s.train.epochs = cfg.get("train.epochs", s.train.epochs);
  s.train.lr = cfg.get("train.lr", s.train.lr);
  s.train.weight_decay = cfg.get("train.weight_decay", s.train.weight_decay);

  s.defense.jaccard_threshold = cfg.get("defense.jaccard_threshold", s.defense.jaccard_threshold);
  s.defense.svd_rank = cfg.get("defense.svd_rank", s.defense.svd_rank);

  s.attack.steps = cfg.get("attack.steps", s.attack.steps);
  s.attack.eta = cfg.get("attack.eta", s.attack.eta);
  s.attack.retrain_every = cfg.get("attack.retrain_every", s.attack.retrain_every);
  s.attack.inner_steps = cfg.get("attack.inner_steps", s.attack.inner_steps);
  s.attack.rounding_samples = cfg.get("attack.rounding_samples", s.attack.rounding_samples);
  s.attack.label_aware_dice = cfg.get("attack.label_aware_dice", s.attack.label_aware_dice);

  try {
    s.gcn.validate();
    s.st_sparse.validate();
    s.train.validate();
    s.attack.validate();
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  return s;
}

std::string default_config_text() {
  const RunSettings s;
  const auto& sp = s.st_sparse.sparse;
  std::ostringstream out;
  out << "# GCN\n"
      << "model.layers = " << s.gcn.layers << "\n"
      << "model.hidden = " << s.gcn.hidden << "\n"
      << "model.dropout = " << format_double(s.gcn.dropout_p) << "\n"
      << "\n# ST-SparseGCN\n"
      << "sparse.layers = " << s.st_sparse.layers << "\n"
      << "sparse.dropout = " << format_double(s.st_sparse.dropout_p) << "\n"
      << "sparse.d_h = " << sp.d_h << "\n"
      << "sparse.alpha = " << format_double(sp.alpha) << "\n"
      << "sparse.gamma = " << format_double(sp.gamma) << "\n"
      << "sparse.tau = " << format_double(sp.tau) << "\n"
      << "sparse.temporal = " << (sp.temporal_enabled ? "true" : "false") << "\n"
      << "# sparse.duty_decay = 0.9\n"
      << "\n# Training\n"
      << "train.epochs = " << s.train.epochs << "\n"
      << "train.lr = " << format_double(s.train.lr) << "\n"
      << "train.weight_decay = " << format_double(s.train.weight_decay) << "\n"
      << "\n# Defenses\n"
      << "defense.jaccard_threshold = " << format_double(s.defense.jaccard_threshold) << "\n"
      << "defense.svd_rank = " << s.defense.svd_rank << "\n"
      << "\n# Attacks\n"
      << "attack.steps = " << s.attack.steps << "\n"
      << "attack.eta = " << format_double(s.attack.eta) << "\n"
      << "attack.retrain_every = " << s.attack.retrain_every << "\n"
      << "attack.inner_steps = " << s.attack.inner_steps << "\n"
      << "attack.rounding_samples = " << s.attack.rounding_samples << "\n"
      << "attack.label_aware_dice = " << (s.attack.label_aware_dice ? "true" : "false") << "\n";
  return out.str();
}

}  // namespace stsparse
