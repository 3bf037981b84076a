#include "stsparse/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace stsparse {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  std::vector<double> data(m.data(), m.data() + m.size());
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols)
    throw ParseError("checkpoint", 0, "matrix data length mismatch");
  return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json vector_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Index>(data.size()));
}

}  // namespace

std::string checkpoint_to_json(const TrainedModel& m) {
  json doc;
  doc["format"] = "stsparse-checkpoint";
  doc["version"] = kCheckpointVersion;
  const auto& mc = m.model;
  json sparse = {{"d_h", mc.sparse.d_h},
                 {"alpha", mc.sparse.alpha},
                 {"gamma", mc.sparse.gamma},
                 {"tau", mc.sparse.tau},
                 {"temporal_enabled", mc.sparse.temporal_enabled}};
  sparse["duty_decay"] = mc.sparse.duty_decay ? json(*mc.sparse.duty_decay) : json(nullptr);
  sparse["k_override"] = mc.sparse.k_override ? json(*mc.sparse.k_override) : json(nullptr);
  doc["model"] = {{"arch", to_string(mc.arch)},
                  {"layers", mc.layers},
                  {"hidden", mc.hidden},
                  {"dropout_p", mc.dropout_p},
                  {"sparse", sparse}};
  doc["train"] = {{"epochs", m.train.epochs},
                  {"lr", m.train.lr},
                  {"seed", m.train.seed},
                  {"weight_decay", m.train.weight_decay}};
  doc["best_val_epoch"] = m.best_val_epoch;
  json weights = json::array();
  for (const auto& w : m.weights) weights.push_back(matrix_json(w));
  doc["weights"] = weights;
  json best = json::array();
  for (const auto& w : m.best_val_weights) best.push_back(matrix_json(w));
  doc["best_val_weights"] = best;
  json duty = json::array();
  for (const auto& d : m.duty)
    duty.push_back({{"s_hat", vector_json(d.s_hat)},
                    {"counts", vector_json(d.counts)},
                    {"epoch", d.epoch}});
  doc["duty"] = duty;
  return doc.dump();
}

TrainedModel checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint", 0, e.what());
  }
  try {
    if (doc.at("format") != "stsparse-checkpoint")
      throw ParseError("checkpoint", 0, "not a checkpoint document");
    if (doc.at("version").get<int>() != kCheckpointVersion)
      throw ParseError("checkpoint", 0,
                       "unsupported checkpoint version " +
                           std::to_string(doc.at("version").get<int>()));
    TrainedModel m;
    const auto& mj = doc.at("model");
    m.model.arch = parse_arch(mj.at("arch").get<std::string>());
    m.model.layers = mj.at("layers").get<int>();
    m.model.hidden = mj.at("hidden").get<int>();
    m.model.dropout_p = mj.at("dropout_p").get<double>();
    const auto& sj = mj.at("sparse");
    m.model.sparse.d_h = sj.at("d_h").get<int>();
    m.model.sparse.alpha = sj.at("alpha").get<double>();
    m.model.sparse.gamma = sj.at("gamma").get<double>();
    m.model.sparse.tau = sj.at("tau").get<double>();
    m.model.sparse.temporal_enabled = sj.at("temporal_enabled").get<bool>();
    if (!sj.at("duty_decay").is_null())
      m.model.sparse.duty_decay = sj.at("duty_decay").get<double>();
    if (!sj.at("k_override").is_null())
      m.model.sparse.k_override = sj.at("k_override").get<int>();
    const auto& tj = doc.at("train");
    m.train.epochs = tj.at("epochs").get<int>();
    m.train.lr = tj.at("lr").get<double>();
    m.train.seed = tj.at("seed").get<std::uint64_t>();
    m.train.weight_decay = tj.at("weight_decay").get<double>();
    m.best_val_epoch = doc.at("best_val_epoch").get<int>();
    for (const auto& w : doc.at("weights")) m.weights.push_back(matrix_from(w));
    for (const auto& w : doc.at("best_val_weights"))
      m.best_val_weights.push_back(matrix_from(w));
    for (const auto& d : doc.at("duty"))
      m.duty.push_back({vector_from(d.at("s_hat")), vector_from(d.at("counts")),
                        d.at("epoch").get<long>()});
    return m;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint", 0, e.what());
  }
}

void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(m) << '\n';
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace stsparse
