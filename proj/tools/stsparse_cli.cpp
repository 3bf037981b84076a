// Command-line front end. Exit codes: 0 ok, 1 other failure, 2 config
// error, 3 data integrity error, 4 plan incomplete after failures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "stsparse/checkpoint.hpp"
#include "stsparse/config.hpp"
#include "stsparse/dataset.hpp"
#include "stsparse/fixtures.hpp"
#include "stsparse/gradcheck.hpp"
#include "stsparse/plan.hpp"

namespace fs = std::filesystem;
using namespace stsparse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIntegrity = 3;
constexpr int kExitIncomplete = 4;

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out = "out";
};

KeyValueConfig load_config(const Globals& g) {
  return g.config.empty() ? KeyValueConfig{} : KeyValueConfig::load(g.config);
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
}

struct DataArgs {
  std::string dataset = "fixture:8";
  std::string data_dir = "data";
  std::string flips;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--dataset", d.dataset, "Bundle name under --data-dir, or fixture:<2|4|6|8>");
  cmd->add_option("--data-dir", d.data_dir, "Directory holding dataset bundles");
  cmd->add_option("--flips", d.flips, "Flip list to apply before training");
}

Graph load_graph(const DataArgs& d) {
  Graph g = resolve_dataset(d.dataset, d.data_dir).graph;
  if (!d.flips.empty()) g = apply_flips(g, flips_from_text(slurp(d.flips), d.flips));
  return g;
}

int run_train(const Globals& glob, const DataArgs& data, const std::string& model,
              const std::string& defense) {
  const KeyValueConfig cfg = load_config(glob);
  const RunSettings s = settings_from(cfg);
  cfg.check_all_used();
  const DefenderSpec d = DefenderSpec::parse(defense == "none" ? model : model + "-" + defense);
  DefenseSpec dspec = s.defense;
  dspec.kind = d.defense;
  const ModelConfig mc = d.arch == Arch::gcn ? s.gcn : s.st_sparse;
  TrainConfig tc = s.train;
  tc.seed = glob.seed;

  const Graph g = load_graph(data);
  const ModelInput in = apply_defense(g, dspec);
  if (d.defense == DefenseKind::jaccard) {
    // Removed edges, in flip-list form, for inspection.
    const Graph pruned = jaccard_prune(g, dspec.jaccard_threshold);
    std::vector<EdgeFlip> removed;
    for (const auto& [i, j] : edge_list(g.adjacency()))
      if (!pruned.has_edge(i, j)) removed.push_back({i, j, FlipAction::remove});
    write_file(fs::path(glob.out) / "pruned_edges.txt", flips_to_text(removed));
  }
  const TrainedModel m = train(in, mc, tc);
  save_checkpoint(m, fs::path(glob.out) / "checkpoint.json");
  std::string history = "epoch,loss,train_acc,val_acc,activation_ratio\n";
  for (const auto& e : m.history)
    history += std::to_string(e.epoch) + "," + format_double(e.loss) + "," +
               format_double(e.train_acc) + "," + format_double(e.val_acc) + "," +
               (e.activation_ratio.empty() ? "" : format_double(e.activation_ratio.front())) + "\n";
  write_file(fs::path(glob.out) / "history.csv", history);
  const double test = accuracy(predict(m, in), in.labels, in.test_mask);
  std::printf("%s on %s: test accuracy %.4f (best val epoch %d)\n", d.name.c_str(),
              data.dataset.c_str(), test, m.best_val_epoch);
  return kExitOk;
}

int run_gradcheck(const Globals& glob, const std::string& model, const std::string& fixture) {
  const Graph g = fixtures::by_name(fixture);
  const ModelInput in = ModelInput::from(g);
  ModelConfig mc = model == "gcn" ? ModelConfig::gcn() : ModelConfig::st_sparse_gcn();
  mc.dropout_p = 0.0;
  mc.hidden = 4;
  mc.sparse.d_h = 8;
  mc.sparse.alpha = 0.5;
  mc.sparse.gamma = 0.5;
  Rng rng(glob.seed);
  const auto weights = init_weights(mc, in.feature_dim(), in.num_classes, rng);
  std::vector<DutyState> duty;
  if (mc.arch == Arch::st_sparse_gcn)
    for (int l = 0; l < mc.layers; ++l) {
      DutyState s = DutyState::zeros(mc.sparse.d_h);
      for (Index j = 0; j < s.s_hat.size(); ++j) s.s_hat(j) = 0.25 * static_cast<double>(j % 3);
      duty.push_back(s);
    }
  const GradCheckReport r = grad_check(
      [&](Tape& tape, std::span<const Value> params) {
        return training_loss(tape, in, mc, params, duty);
      },
      weights);
  std::printf("%s gradcheck on %s: max relative error %.3e over %zu entries -> %s\n",
              model.c_str(), fixture.c_str(), r.max_relative_error, r.entries_checked,
              r.passed ? "pass" : "FAIL");
  return r.passed ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal sparse GCN: training, attacks, defenses and sweeps"};
  app.require_subcommand(1);
  Globals glob;
  app.add_option("--seed", glob.seed, "Random seed")->capture_default_str();
  app.add_option("--config", glob.config, "Key-value config file");
  app.add_option("--out", glob.out, "Output directory")->capture_default_str();

  auto* convert = app.add_subcommand("convert", "Convert a public dataset (or a fixture) to a bundle");
  std::string fmt = "linqs", content, cites, gml, name, fixture_name;
  convert->add_option("--format", fmt, "linqs | gml | fixture")->capture_default_str();
  convert->add_option("--content", content, "LINQS .content file");
  convert->add_option("--cites", cites, "LINQS .cites file");
  convert->add_option("--gml", gml, "GML file (Polblogs)");
  convert->add_option("--fixture", fixture_name, "Fixture to export, e.g. fixture:8");
  convert->add_option("--name", name, "Bundle name")->required();

  auto* train_cmd = app.add_subcommand("train", "Train a model and save a checkpoint");
  DataArgs train_data;
  std::string model = "gcn";
  add_data_options(train_cmd, train_data);
  train_cmd->add_option("--model", model, "gcn | stsparse")->capture_default_str();

  auto* defend = app.add_subcommand("defend", "Apply a preprocessing defense, then train");
  DataArgs defend_data;
  std::string defend_model = "gcn", defense = "jaccard";
  add_data_options(defend, defend_data);
  defend->add_option("--model", defend_model, "gcn | stsparse")->capture_default_str();
  defend->add_option("--defense", defense, "jaccard | svd")->capture_default_str();

  auto* attack = app.add_subcommand("attack", "Generate a flip list");
  DataArgs attack_data;
  std::string attacker = "dice";
  double rate = 0.05;
  add_data_options(attack, attack_data);
  attack->add_option("--attack", attacker, "dice | pgd | minmax")->capture_default_str();
  attack->add_option("--rate", rate, "Perturbation rate in [0, 0.25]")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Run an experiment plan (resumable)");
  int workers = 0;
  sweep->add_option("--workers", workers, "Override plan.workers");

  auto* report = app.add_subcommand("report", "Rebuild summaries and plots from records.csv");
  bool conventional = false;
  report->add_flag("--conventional", conventional, "Use (clean - acc) / clean for DR");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of model gradients");
  std::string gc_model = "stsparse", gc_fixture = "fixture:4";
  gradcheck->add_option("--model", gc_model, "gcn | stsparse")->capture_default_str();
  gradcheck->add_option("--fixture", gc_fixture, "Fixture graph")->capture_default_str();

  app.add_subcommand("defaults", "Print a config file listing every key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (convert->parsed()) {
      SplitSpec split;
      split.seed = glob.seed;
      const fs::path out = fs::path(glob.out) / name;
      if (fmt == "linqs") {
        if (content.empty() || cites.empty())
          throw ConfigError("linqs conversion needs --content and --cites");
        const Index skipped = convert_linqs(content, cites, name, split, out);
        std::printf("wrote %s (%lld citation lines skipped)\n", out.c_str(),
                    static_cast<long long>(skipped));
      } else if (fmt == "gml") {
        if (gml.empty()) throw ConfigError("gml conversion needs --gml");
        const Index skipped = convert_gml(gml, name, split, out);
        std::printf("wrote %s (%lld edges skipped)\n", out.c_str(), static_cast<long long>(skipped));
      } else if (fmt == "fixture") {
        save_bundle(fixtures::by_name(fixture_name.empty() ? "fixture:8" : fixture_name), name, out);
        std::printf("wrote %s\n", out.c_str());
      } else {
        throw ConfigError("unknown format '" + fmt + "'");
      }
      return kExitOk;
    }
    if (train_cmd->parsed()) return run_train(glob, train_data, model, "none");
    if (defend->parsed()) return run_train(glob, defend_data, defend_model, defense);
    if (attack->parsed()) {
      const KeyValueConfig cfg = load_config(glob);
      const RunSettings s = settings_from(cfg);
      cfg.check_all_used();
      AttackSpec spec = s.attack;
      spec.kind = parse_attack(attacker);
      spec.rate = rate;
      spec.seed = glob.seed;
      try {
        spec.validate();
      } catch (const ContractError& e) {
        throw ConfigError(e.what());
      }
      TrainConfig tc = s.train;
      tc.seed = glob.seed;
      const Graph g = load_graph(attack_data);
      const auto flips = run_attack(g, s.gcn, tc, spec);
      const fs::path file = fs::path(glob.out) / "flips.txt";
      write_file(file, flips_to_text(flips));
      std::printf("%zu flips (budget %lld) written to %s\n", flips.size(),
                  static_cast<long long>(spec.budget(g.num_edges())), file.c_str());
      return kExitOk;
    }
    if (sweep->parsed()) {
      const KeyValueConfig cfg = load_config(glob);
      ExperimentPlan plan = ExperimentPlan::from_config(cfg, glob.seed);
      cfg.check_all_used();
      if (workers > 0) plan.workers = workers;
      const PlanOutcome out = run_plan(plan, glob.out, &std::cerr);
      std::printf("%zu records, %zu cells run, %zu reused, %zu failures\n", out.records.size(),
                  out.cells_run, out.cells_reused, out.failures.size());
      for (const auto& f : out.failures) std::fprintf(stderr, "failed: %s\n", f.c_str());
      return out.complete() ? kExitOk : kExitIncomplete;
    }
    if (report->parsed()) {
      write_reports(glob.out, conventional ? DrFormula::conventional : DrFormula::literal);
      std::printf("reports written to %s\n", glob.out.c_str());
      return kExitOk;
    }
    if (gradcheck->parsed()) return run_gradcheck(glob, gc_model, gc_fixture);
    if (app.got_subcommand("defaults")) {
      std::fputs(default_config_text().c_str(), stdout);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "integrity error (%s): %s\n", e.field().c_str(), e.what());
    return kExitIntegrity;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "parse error: %s\n", e.what());
    return kExitIntegrity;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitOk;
}
