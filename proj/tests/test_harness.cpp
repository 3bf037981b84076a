#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "stsparse/config.hpp"
#include "stsparse/dataset.hpp"
#include "stsparse/errors.hpp"
#include "stsparse/fixtures.hpp"
#include "stsparse/metrics.hpp"
#include "stsparse/plan.hpp"
#include "stsparse/svg.hpp"

namespace fs = std::filesystem;
using namespace stsparse;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stsparse_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put(const fs::path& file, const std::string& text) {
  std::ofstream(file, std::ios::binary) << text;
}

RunRecord record(double rate, std::uint64_t seed, double dr, const std::string& defender = "gcn") {
  return {"ds", defender, "dice", rate, seed, 0.5, 0.5, dr, 0.0};
}

/// Writes a bundle by hand and seals it with a consistent manifest.
void hand_bundle(const fs::path& dir, Index n, const std::string& edges, const std::string& labels,
                 const std::string& splits, int classes) {
  fs::create_directories(dir);
  put(dir / "edges.tsv", edges);
  put(dir / "labels.tsv", labels);
  put(dir / "splits.tsv", splits);
  const auto lines = static_cast<Index>(std::count(edges.begin(), edges.end(), '\n'));
  write_manifest({"hand", n, lines, n, classes, bundle_digest(dir)}, dir / "manifest.toml");
}

ExperimentPlan small_plan() {
  ExperimentPlan p;
  p.datasets = {"fixture:8"};
  p.defenders = {"gcn"};
  p.attackers = {"none"};
  p.rates = {0.0};
  p.seeds = {0};
  p.settings.train.epochs = 30;
  p.settings.st_sparse.sparse.d_h = 16;
  p.settings.st_sparse.sparse.alpha = 0.25;
  return p;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(STSPARSE_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("dropping rate examples") {
  CHECK(std::abs(dropping_rate(0.80, 0.88) - 0.10) <= 1e-12);
  CHECK(dropping_rate(0.88, 0.88) == 0.0);
  CHECK(dropping_rate(0.5, 0.25) == -0.5);
  CHECK_THROWS_AS(dropping_rate(0.0, 0.8), UndefinedMetricError);
  CHECK(std::abs(conventional_dropping_rate(0.80, 0.88) - 0.08 / 0.88) <= 1e-15);
  CHECK(dropping_rate(0.6, 0.8, DrFormula::conventional) == conventional_dropping_rate(0.6, 0.8));
}

TEST_CASE("mean dropping rate of constant groups is exact") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double c = u(rng);
    std::vector<RunRecord> group;
    for (double rate : default_rate_grid())
      for (std::uint64_t seed = 0; seed < 5; ++seed) group.push_back(record(rate, seed, c));
    CHECK(mean_dropping_rate(group) == c);
  }
}

TEST_CASE("mean dropping rate averages seeds, then nonzero rates") {
  std::vector<RunRecord> group = {record(0.0, 0, 9.0), record(0.0, 1, 9.0),
                                  record(0.1, 0, 0.1), record(0.1, 1, 0.3),
                                  record(0.2, 0, 0.5), record(0.2, 1, 0.5)};
  const std::vector<double> rates = {0.0, 0.1, 0.2};
  const std::vector<std::uint64_t> seeds = {0, 1};
  CHECK(mean_dropping_rate(group, rates, seeds) == doctest::Approx(0.35).epsilon(1e-15));
}

TEST_CASE("mean dropping rate rejects incomplete and mixed groups") {
  const std::vector<std::uint64_t> seeds = {0, 1};
  const std::vector<double> only_zero = {0.0};
  std::vector<RunRecord> group = {record(0.0, 0, 0.0), record(0.0, 1, 0.0)};
  CHECK_THROWS_AS(mean_dropping_rate(group, only_zero, seeds), IncompleteGroupError);

  const std::vector<double> rates = {0.0, 0.1};
  group.push_back(record(0.1, 0, 0.2));
  try {
    mean_dropping_rate(group, rates, seeds);
    FAIL("expected IncompleteGroupError");
  } catch (const IncompleteGroupError& e) {
    CHECK(std::string(e.what()).find("rate 0.1, seed 1") != std::string::npos);
  }
  group.push_back(record(0.1, 1, 0.2, "stsparse"));
  CHECK_THROWS_AS(mean_dropping_rate(group, rates, seeds), ContractError);
}

TEST_CASE("records round trip exactly through CSV") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<RunRecord> records;
  for (int i = 0; i < 200; ++i)
    records.push_back({"cora", i % 2 ? "gcn" : "stsparse-svd", "pgd", u(rng) / 40.0, rng(), u(rng),
                       u(rng), u(rng) * 1e-17, std::abs(u(rng)) * 1e6});
  records.push_back({"x", "y", "z", 0.0, 0, 1.0 / 3.0, 5e-324, -0.0, 1e300});
  CHECK(records_from_csv(records_to_csv(records)) == records);

  const fs::path dir = scratch("csv");
  write_records(dir / "records.csv", records);
  CHECK(read_records(dir / "records.csv") == records);
}

TEST_CASE("format_double is the shortest exact representation") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(0.05) == "0.05");
  CHECK(format_double(1.0) == "1");
  CHECK(parse_double(format_double(0.1 + 0.2)) == 0.1 + 0.2);
  CHECK_THROWS(parse_double("abc"));
}

TEST_CASE("records CSV errors name the line") {
  CHECK_THROWS_AS(records_from_csv("a,b\n"), ParseError);
  try {
    records_from_csv(std::string(kRecordsHeader) + "\nds,gcn,dice,0.1,0,0.5,0.5\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::vector<RunRecord> bad = {record(0.1, 0, 0.0, "a,b")};
  CHECK_THROWS_AS(records_to_csv(bad), ContractError);
}

TEST_CASE("same_rate compares at 6 decimals") {
  CHECK(same_rate(0.1, 0.05 + 0.05));
  CHECK(same_rate(0.15, 0.1 + 0.05));
  CHECK_FALSE(same_rate(0.1, 0.100001));
}

TEST_CASE("key-value config parsing") {
  const auto cfg = KeyValueConfig::parse(
      "# comment\nsparse.alpha = 0.25\nplan.rates = 0, 0.05 ,0.1\n"
      "sparse.temporal = false\ntrain.epochs = 7  # trailing\n");
  const RunSettings s = settings_from(cfg);
  CHECK(s.st_sparse.sparse.alpha == 0.25);
  CHECK_FALSE(s.st_sparse.sparse.temporal_enabled);
  CHECK(s.train.epochs == 7);
  CHECK(cfg.get_doubles("plan.rates", {}) == std::vector<double>{0.0, 0.05, 0.1});
  CHECK_NOTHROW(cfg.check_all_used());

  CHECK_THROWS_AS(KeyValueConfig::parse("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueConfig::parse("no equals sign\n"), ConfigError);
  const auto typo = KeyValueConfig::parse("sparse.alhpa = 0.2\n");
  settings_from(typo);
  CHECK_THROWS_AS(typo.check_all_used(), ConfigError);
  CHECK_THROWS_AS(settings_from(KeyValueConfig::parse("train.epochs = many\n")), ConfigError);
}

TEST_CASE("the default config text parses and uses every key") {
  const auto cfg = KeyValueConfig::parse(default_config_text());
  ExperimentPlan::from_config(cfg);
  CHECK_NOTHROW(cfg.check_all_used());
}

TEST_CASE("plan config validation") {
  auto cfg = KeyValueConfig::parse("plan.defenders = gcn, nonsense\n");
  CHECK_THROWS_AS(ExperimentPlan::from_config(cfg).validate(), ConfigError);
  cfg = KeyValueConfig::parse("plan.rates = 0.3\n");
  CHECK_THROWS_AS(ExperimentPlan::from_config(cfg).validate(), ConfigError);
  cfg = KeyValueConfig::parse("");
  const ExperimentPlan p = ExperimentPlan::from_config(cfg, 10);
  CHECK(p.seeds == std::vector<std::uint64_t>{10, 11, 12, 13, 14});
}

TEST_CASE("defender names") {
  CHECK(DefenderSpec::parse("gcn").arch == Arch::gcn);
  const auto d = DefenderSpec::parse("stsparse-svd");
  CHECK(d.arch == Arch::st_sparse_gcn);
  CHECK(d.defense == DefenseKind::svd);
  CHECK(DefenderSpec::parse("gcn-jaccard").defense == DefenseKind::jaccard);
  CHECK_THROWS_AS(DefenderSpec::parse("mlp"), ConfigError);
}

TEST_CASE("bundles round trip") {
  const fs::path dir = scratch("bundle");
  const Graph g = fixtures::eight_node();
  save_bundle(g, "eight", dir / "eight");
  const DatasetBundle b = load_dataset(dir / "eight", "eight");
  CHECK(b.graph == g);
  CHECK(b.manifest.n == 8);
  CHECK(b.manifest.edges == g.num_edges());
  CHECK(resolve_dataset("eight", dir).graph == g);
  CHECK(resolve_dataset("fixture:8", dir).graph == g);
}

TEST_CASE("bundle loading collapses reversed duplicates and defaults features") {
  const fs::path dir = scratch("hand") / "hand";
  hand_bundle(dir, 3, "0\t1\n1\t0\n1\t2\n2\t2\n", "0\t0\n1\t1\n2\t0\n",
              "0\ttrain\n1\tval\n2\ttest\n", 2);
  const Graph g = load_dataset(dir).graph;
  CHECK(g.num_edges() == 2);
  CHECK(g.has_edge(0, 1));
  CHECK(g.has_edge(2, 1));
  CHECK(g.features().isApprox(Matrix::Identity(3, 3)));
  CHECK(g.train_mask()(0));
}

TEST_CASE("integrity errors name the manifest field") {
  const fs::path root = scratch("integrity");
  const Graph g = fixtures::eight_node();
  auto field_of = [&](const std::function<void(Manifest&)>& edit) {
    const fs::path dir = root / "b";
    fs::remove_all(dir);
    save_bundle(g, "b", dir);
    Manifest m = read_manifest(dir / "manifest.toml");
    edit(m);
    write_manifest(m, dir / "manifest.toml");
    try {
      load_dataset(dir, "b");
    } catch (const IntegrityError& e) {
      return e.field();
    }
    return std::string("none");
  };
  CHECK(field_of([](Manifest& m) { m.name = "other"; }) == "name");
  CHECK(field_of([](Manifest& m) { m.n = 9; }) == "n");
  CHECK(field_of([](Manifest& m) { m.edges += 1; }) == "edges");
  CHECK(field_of([](Manifest& m) { m.d = 2; }) == "d");
  CHECK(field_of([](Manifest& m) { m.C = 5; }) == "C");
  CHECK(field_of([](Manifest& m) { m.digest = "0000000000000000"; }) == "digest");
  CHECK(field_of([](Manifest&) {}) == "none");
}

TEST_CASE("parse errors carry the line number") {
  const fs::path dir = scratch("parse") / "p";
  hand_bundle(dir, 3, "0\t1\nfoo\n", "0\t0\n1\t0\n2\t0\n", "0\ttrain\n1\tval\n2\ttest\n", 1);
  try {
    load_dataset(dir);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.file().find("edges.tsv") != std::string::npos);
  }
  hand_bundle(dir, 3, "0\t1\n", "0\t0\n1\t0\n2\tx\n", "0\ttrain\n1\tval\n2\ttest\n", 1);
  try {
    load_dataset(dir);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("seeded splits") {
  std::vector<int> labels;
  for (int i = 0; i < 1600; ++i) labels.push_back(i % 4);
  NodeMask train, val, test;
  make_split(labels, 4, {}, train, val, test);
  CHECK(train.count() == 80);
  CHECK(val.count() == 500);
  CHECK(test.count() == 1000);
  CHECK_FALSE((train && val).any());
  CHECK_FALSE((val && test).any());
  std::vector<int> per_class(4, 0);
  for (int i = 0; i < 1600; ++i)
    if (train(i)) ++per_class[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
  CHECK(per_class == std::vector<int>{20, 20, 20, 20});
  NodeMask t2, v2, s2;
  make_split(labels, 4, {}, t2, v2, s2);
  CHECK((t2 == train).all());

  // Too small for the fixed counts: 10/10/80 percent.
  std::vector<int> few(100, 0);
  make_split(few, 1, {}, train, val, test);
  CHECK(train.count() == 10);
  CHECK(val.count() == 10);
  CHECK(test.count() == 80);
}

TEST_CASE("LINQS conversion") {
  const fs::path dir = scratch("linqs");
  put(dir / "t.content", "p1\t1\t0\t1\tA\np2\t0\t1\t0\tB\np3\t1\t1\t0\tA\n");
  put(dir / "t.cites", "p1\tp2\np2\tp3\np9\tp1\np2\tp1\n");
  CHECK(convert_linqs(dir / "t.content", dir / "t.cites", "t", {}, dir / "t") == 1);
  const DatasetBundle b = load_dataset(dir / "t", "t");
  CHECK(b.graph.num_nodes() == 3);
  CHECK(b.graph.feature_dim() == 3);
  CHECK(b.graph.num_edges() == 2);
  CHECK(b.manifest.edges == 3);
  CHECK(b.manifest.C == 2);
  Matrix x(3, 3);
  x << 1, 0, 1, 0, 1, 0, 1, 1, 0;
  CHECK(b.graph.features() == x);
  CHECK(b.graph.labels() == std::vector<int>{0, 1, 0});
}

TEST_CASE("GML conversion") {
  const fs::path dir = scratch("gml");
  put(dir / "t.gml",
      "graph [\n  directed 1\n"
      "  node [ id 10 label \"a b\" value 0 ]\n"
      "  node [ id 20 label \"c\" value 1 ]\n"
      "  node [ id 30 value 0 ]\n"
      "  edge [ source 10 target 20 ]\n"
      "  edge [ source 20 target 20 ]\n"
      "  edge [ source 30 target 10 ]\n"
      "  edge [ source 20 target 10 ]\n]\n");
  CHECK(convert_gml(dir / "t.gml", "t", {}, dir / "t") == 1);
  const DatasetBundle b = load_dataset(dir / "t", "t");
  CHECK(b.graph.num_nodes() == 3);
  CHECK(b.graph.num_edges() == 2);
  CHECK(b.graph.has_edge(0, 1));
  CHECK(b.graph.has_edge(0, 2));
  CHECK(b.graph.features().isApprox(Matrix::Identity(3, 3)));
  CHECK(b.graph.labels() == std::vector<int>{0, 1, 0});
}

TEST_CASE("an empty plan writes header-only records") {
  const fs::path dir = scratch("empty");
  ExperimentPlan p;
  p.datasets = {};
  const PlanOutcome out = run_plan(p, dir);
  CHECK(out.complete());
  CHECK(out.records.empty());
  CHECK(slurp(dir / "records.csv") == std::string(kRecordsHeader) + "\n");
  CHECK(slurp(dir / "failures.csv") == "cell,error\n");
}

TEST_CASE("a clean GCN cell has zero dropping rate") {
  const fs::path dir = scratch("single");
  const PlanOutcome out = run_plan(small_plan(), dir);
  REQUIRE(out.complete());
  REQUIRE(out.records.size() == 1);
  const RunRecord& r = out.records.front();
  CHECK(r.dataset == "fixture:8");
  CHECK(r.attacker == "none");
  CHECK(r.acc == r.clean_ref);
  CHECK(r.dr == 0.0);
  CHECK(fs::exists(dir / "cells" / (cell_key("fixture:8", "gcn", "none", 0.0, 0) + ".json")));
  CHECK(read_records(dir / "records.csv") == out.records);
}

TEST_CASE("resuming a finished plan reproduces its outputs byte for byte") {
  const fs::path dir = scratch("resume");
  ExperimentPlan p = small_plan();
  p.defenders = {"gcn", "stsparse"};
  p.attackers = {"none", "dice"};
  p.rates = {0.0, 0.1, 0.2};
  p.seeds = {0, 1};
  const PlanOutcome first = run_plan(p, dir);
  REQUIRE(first.complete());
  CHECK(first.cells_run > 0);
  const std::vector<std::string> files = {"records.csv", "summary_mdr.csv", "failures.csv",
                                          "accuracy_vs_rate_fixture-8.svg", "activation_ratio.svg"};
  std::vector<std::string> before;
  for (const auto& f : files) {
    INFO(f);
    REQUIRE(fs::exists(dir / f));
    before.push_back(slurp(dir / f));
  }
  const PlanOutcome second = run_plan(p, dir);
  CHECK(second.cells_run == 0);
  CHECK(second.records == first.records);
  for (std::size_t i = 0; i < files.size(); ++i) {
    INFO(files[i]);
    CHECK(slurp(dir / files[i]) == before[i]);
  }

  // A deleted cell is recomputed; the others are reused.
  fs::remove(dir / "cells" / (cell_key("fixture:8", "stsparse", "dice", 0.1, 1) + ".json"));
  const PlanOutcome third = run_plan(p, dir);
  CHECK(third.cells_run == 1);
  CHECK(third.records.size() == first.records.size());
}

TEST_CASE("failed cells are reported and the plan is incomplete") {
  const fs::path dir = scratch("failure");
  ExperimentPlan p = small_plan();
  p.settings.train.lr = 1e300;
  const PlanOutcome out = run_plan(p, dir);
  CHECK_FALSE(out.complete());
  CHECK(out.records.empty());
  const std::string failures = slurp(dir / "failures.csv");
  CHECK(failures.rfind("cell,error\n", 0) == 0);
  CHECK(failures.find(cell_key("fixture:8", "gcn", "none", 0.0, 0)) != std::string::npos);
}

TEST_CASE("ablation sweeps write one row per value and seed") {
  const fs::path dir = scratch("ablation");
  ExperimentPlan p = small_plan();
  p.alphas = {0.25, 0.5};
  p.hidden_dims = {8, 16};
  p.seeds = {0, 1};
  const PlanOutcome out = run_plan(p, dir);
  REQUIRE(out.complete());
  for (const std::string f : {"ablation_alpha.csv", "ablation_dh.csv"}) {
    const std::string text = slurp(dir / f);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  }
  CHECK(slurp(dir / "ablation_dh.csv").rfind("dataset,d_h,seed,acc\nfixture:8,8,0,", 0) == 0);
}

TEST_CASE("worker count does not change the results") {
  ExperimentPlan p = small_plan();
  p.defenders = {"gcn", "stsparse"};
  p.attackers = {"dice"};
  p.rates = {0.0, 0.2};
  p.seeds = {0, 1};
  const fs::path one = scratch("workers1"), two = scratch("workers2");
  PlanOutcome a = run_plan(p, one);
  p.workers = 2;
  PlanOutcome b = run_plan(p, two);
  REQUIRE(a.complete());
  REQUIRE(b.complete());
  for (auto* o : {&a, &b})
    for (auto& r : o->records) r.wall_s = 0.0;
  CHECK(a.records == b.records);
  CHECK(slurp(one / "summary_mdr.csv") == slurp(two / "summary_mdr.csv"));
}

TEST_CASE("summary table marks incomplete groups") {
  std::vector<RunRecord> records;
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    records.push_back(record(0.1, seed, 0.2));
    records.push_back(record(0.1, seed, 0.4, "stsparse"));
  }
  records.pop_back();
  const std::vector<double> rates = {0.0, 0.1};
  const std::vector<std::uint64_t> seeds = {0, 1};
  const std::string table = summary_mdr_csv(records, rates, seeds, DrFormula::literal);
  CHECK(table.find("0.2") != std::string::npos);
  CHECK(table.find("NA") != std::string::npos);
}

TEST_CASE("reports rebuild from records.csv") {
  const fs::path dir = scratch("report");
  std::vector<RunRecord> records;
  for (double rate : {0.0, 0.1})
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
      RunRecord r = record(rate, seed, 0.0);
      r.acc = 0.8 - rate;
      r.clean_ref = 0.8;
      r.dr = dropping_rate(r.acc, r.clean_ref);
      records.push_back(r);
    }
  write_records(dir / "records.csv", records);
  write_reports(dir, DrFormula::literal);
  write_reports(dir, DrFormula::conventional);
  CHECK(fs::exists(dir / "summary_mdr.csv"));
  CHECK(fs::exists(dir / "summary_mdr_conventional.csv"));
  CHECK(slurp(dir / "summary_mdr.csv").find(format_double(dropping_rate(0.8 - 0.1, 0.8))) !=
        std::string::npos);
}

TEST_CASE("line charts are well-formed") {
  const std::string svg = line_chart_svg({"t", "x", "y"}, {{"gcn", {0, 1, 2}, {0.5, 0.7, 0.6}},
                                                          {"flat", {0}, {1}}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("gcn") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);
  CHECK(line_chart_svg({"empty", "x", "y"}, {}).find("</svg>") != std::string::npos);
}

TEST_CASE("CLI exit codes") {
  const fs::path dir = scratch("cli");
  const std::string out = " --out " + dir.string();
  put(dir / "fast.cfg", "train.epochs = 20\n");
  CHECK(run_cli("--config " + (dir / "fast.cfg").string() + out + "/train train --dataset fixture:8") == 0);
  CHECK(fs::exists(dir / "train" / "checkpoint.json"));
  CHECK(fs::exists(dir / "train" / "history.csv"));

  put(dir / "typo.cfg", "train.epoch = 20\n");
  CHECK(run_cli("--config " + (dir / "typo.cfg").string() + out + " train") == 2);
  CHECK(run_cli("train --model nonsense") != 0);
  CHECK(run_cli("frobnicate") == 2);

  save_bundle(fixtures::eight_node(), "broken", dir / "data" / "broken");
  Manifest m = read_manifest(dir / "data" / "broken" / "manifest.toml");
  m.n = 99;
  write_manifest(m, dir / "data" / "broken" / "manifest.toml");
  CHECK(run_cli(out + " train --dataset broken --data-dir " + (dir / "data").string()) == 3);

  put(dir / "diverge.cfg",
      "train.lr = 1e300\nplan.datasets = fixture:8\nplan.defenders = gcn\n"
      "plan.attackers = none\nplan.seeds = 0\n");
  CHECK(run_cli("--config " + (dir / "diverge.cfg").string() + out + "/sweep sweep") == 4);

  CHECK(run_cli("gradcheck --model gcn") == 0);
  CHECK(run_cli("gradcheck --model stsparse") == 0);
}
