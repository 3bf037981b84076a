#include "stsparse/plan.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "stsparse/dataset.hpp"
#include "stsparse/svg.hpp"

namespace stsparse {

namespace fs = std::filesystem;
using nlohmann::json;

DefenderSpec DefenderSpec::parse(const std::string& name) {
  DefenderSpec d;
  d.name = name;
  std::string base = name, defense = "none";
  if (const auto dash = name.find('-'); dash != std::string::npos) {
    base = name.substr(0, dash);
    defense = name.substr(dash + 1);
  }
  if (base == "gcn") d.arch = Arch::gcn;
  else if (base == "stsparse") d.arch = Arch::st_sparse_gcn;
  else throw ConfigError("unknown defender '" + name + "'");
  if (defense == "none" && name.find('-') != std::string::npos)
    throw ConfigError("unknown defender '" + name + "'");
  d.defense = parse_defense(defense);
  return d;
}

void ExperimentPlan::validate() const {
  for (const auto& d : defenders) DefenderSpec::parse(d);
  for (const auto& a : attackers) parse_attack(a);
  for (double r : rates)
    if (!(r >= 0.0 && r <= 0.25))
      throw ConfigError("rate " + format_double(r) + " outside [0, 0.25]");
  if (workers < 1) throw ConfigError("plan.workers must be >= 1");
  if (!datasets.empty() && seeds.empty()) throw ConfigError("plan has no seeds");
  for (const auto& name : datasets)
    if (name.empty() || name.find_first_of(",/\n") != std::string::npos)
      throw ConfigError("bad dataset name '" + name + "'");
  try {
    settings.gcn.validate();
    settings.st_sparse.validate();
    settings.train.validate();
    settings.attack.validate();
    for (double a : alphas) {
      SparseConfig s = settings.st_sparse.sparse;
      s.alpha = a;
      s.validate();
    }
    for (int d : hidden_dims) {
      SparseConfig s = settings.st_sparse.sparse;
      s.d_h = d;
      s.validate();
    }
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentPlan ExperimentPlan::from_config(const KeyValueConfig& cfg, std::uint64_t base_seed) {
  ExperimentPlan p;
  p.settings = settings_from(cfg);
  p.datasets = cfg.get_list("plan.datasets", p.datasets);
  p.defenders = cfg.get_list("plan.defenders", p.defenders);
  p.attackers = cfg.get_list("plan.attackers", p.attackers);
  p.rates = cfg.get_doubles("plan.rates", p.rates);
  p.seeds.clear();
  if (cfg.has("plan.seeds")) {
    for (double s : cfg.get_doubles("plan.seeds", {})) {
      if (s < 0 || s != static_cast<double>(static_cast<std::uint64_t>(s)))
        throw ConfigError("plan.seeds must be non-negative integers");
      p.seeds.push_back(static_cast<std::uint64_t>(s));
    }
  } else {
    for (std::uint64_t i = 0; i < 5; ++i) p.seeds.push_back(base_seed + i);
  }
  p.alphas = cfg.get_doubles("plan.alphas", {});
  for (double d : cfg.get_doubles("plan.hidden_dims", {})) p.hidden_dims.push_back(static_cast<int>(d));
  p.data_dir = cfg.get("plan.data_dir", "data");
  p.workers = cfg.get("plan.workers", p.workers);
  p.validate();
  return p;
}

std::string cell_key(const std::string& dataset, const std::string& defender,
                     const std::string& attacker, double rate, std::uint64_t seed) {
  std::string key = dataset + "__" + defender + "__" + attacker + "__r" + format_double(rate) +
                    "__s" + std::to_string(seed);
  std::replace(key.begin(), key.end(), ':', '-');
  return key;
}

namespace {

void write_atomic(const fs::path& file, const std::string& text) {
  std::ostringstream tid;
  tid << std::this_thread::get_id();
  const fs::path tmp = file.string() + ".tmp." + tid.str();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw ConfigError("failed writing " + tmp.string());
  }
  fs::rename(tmp, file);
}

std::string read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CellResult {
  double acc = 0.0;
  double wall_s = 0.0;
  std::vector<std::vector<double>> activation_ratio;
};

CellResult read_cell(const fs::path& file) {
  const json j = json::parse(read_file(file));
  return {j.at("acc").get<double>(), j.at("wall_s").get<double>(),
          j.at("activation_ratio").get<std::vector<std::vector<double>>>()};
}

std::string cell_json(const CellResult& c) {
  json j;
  j["acc"] = c.acc;
  j["wall_s"] = c.wall_s;
  j["activation_ratio"] = c.activation_ratio;
  return j.dump() + "\n";
}

/// Bounded pool: `workers` threads drain the job list; the first error of
/// each job is reported through `on_error`.
void run_jobs(std::vector<std::function<void()>>& jobs, int workers,
              const std::function<void(std::size_t, const std::string&)>& on_error) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        jobs[i]();
      } catch (const std::exception& e) {
        on_error(i, e.what());
      }
    }
  };
  const int n = std::max(1, std::min<int>(workers, static_cast<int>(jobs.size())));
  if (n == 1) {
    worker();
    return;
  }
  std::vector<std::thread> threads;
  for (int t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
}

CellResult train_cell(const Graph& g, const ModelConfig& mc, const TrainConfig& tc,
                      const DefenseSpec& defense) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelInput in = apply_defense(g, defense);
  const TrainedModel m = train(in, mc, tc);
  CellResult r;
  r.acc = accuracy(predict(m, in), in.labels, in.test_mask);
  r.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& e : m.history) r.activation_ratio.push_back(e.activation_ratio);
  return r;
}

struct Cell {
  std::string dataset;
  std::string defender;
  std::string attacker;
  double rate = 0.0;
  std::uint64_t seed = 0;
  std::string key;
};

std::string flips_key(const std::string& dataset, const std::string& attacker, double rate,
                      std::uint64_t seed) {
  return cell_key(dataset, "flips", attacker, rate, seed);
}

double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  int k = 0;
  for (double x : v) m += (x - m) / ++k;
  return m;
}

std::vector<double> sorted_unique_rates(std::span<const RunRecord> records) {
  std::vector<double> rates;
  for (const auto& r : records)
    if (std::none_of(rates.begin(), rates.end(), [&](double x) { return same_rate(x, r.rate); }))
      rates.push_back(r.rate);
  std::sort(rates.begin(), rates.end());
  return rates;
}

void write_accuracy_plots(const fs::path& out_dir, std::span<const RunRecord> records) {
  std::vector<std::string> datasets;
  for (const auto& r : records)
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
      datasets.push_back(r.dataset);
  for (const auto& ds : datasets) {
    std::vector<std::pair<std::string, std::string>> groups;
    for (const auto& r : records)
      if (r.dataset == ds && r.attacker != "none") {
        const std::pair<std::string, std::string> g{r.defender, r.attacker};
        if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
      }
    if (groups.empty()) continue;
    std::vector<Series> series;
    for (const auto& [def, att] : groups) {
      Series s{def + " / " + att, {}, {}};
      std::vector<RunRecord> sub;
      for (const auto& r : records)
        if (r.dataset == ds && r.defender == def && r.attacker == att) sub.push_back(r);
      for (double rate : sorted_unique_rates(sub)) {
        std::vector<double> accs;
        for (const auto& r : sub)
          if (same_rate(r.rate, rate)) accs.push_back(r.acc);
        s.x.push_back(rate);
        s.y.push_back(mean_of(accs));
      }
      series.push_back(std::move(s));
    }
    std::string file = "accuracy_vs_rate_" + ds + ".svg";
    std::replace(file.begin(), file.end(), ':', '-');
    write_atomic(out_dir / file,
                 line_chart_svg({"Test accuracy vs perturbation rate (" + ds + ")",
                                 "perturbation rate", "test accuracy"},
                                series));
  }
}

}  // namespace

std::string summary_mdr_csv(std::span<const RunRecord> records, std::span<const double> rates,
                            std::span<const std::uint64_t> seeds, DrFormula formula) {
  std::vector<std::string> datasets, defenders, attackers;
  auto note = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : records) {
    note(datasets, r.dataset);
    note(defenders, r.defender);
    if (r.attacker != "none") note(attackers, r.attacker);
  }
  std::string out = "dataset,defender";
  for (const auto& a : attackers) out += "," + a;
  out += "\n";
  for (const auto& ds : datasets)
    for (const auto& def : defenders) {
      bool any = false;
      std::string row = ds + "," + def;
      for (const auto& att : attackers) {
        std::vector<RunRecord> group;
        for (const auto& r : records)
          if (r.dataset == ds && r.defender == def && r.attacker == att) group.push_back(r);
        any = any || !group.empty();
        std::string cell = "NA";
        if (!group.empty()) {
          try {
            cell = format_double(mean_dropping_rate(group, rates, seeds, formula));
          } catch (const IncompleteGroupError&) {
          } catch (const UndefinedMetricError&) {
          }
        }
        row += "," + cell;
      }
      if (any) out += row + "\n";
    }
  return out;
}

void write_reports(const fs::path& out_dir, DrFormula formula) {
  const auto records = read_records(out_dir / "records.csv");
  const auto rates = sorted_unique_rates(records);
  std::set<std::uint64_t> seed_set;
  for (const auto& r : records) seed_set.insert(r.seed);
  const std::vector<std::uint64_t> seeds(seed_set.begin(), seed_set.end());
  const std::string name =
      formula == DrFormula::literal ? "summary_mdr.csv" : "summary_mdr_conventional.csv";
  write_atomic(out_dir / name, summary_mdr_csv(records, rates, seeds, formula));
  write_accuracy_plots(out_dir, records);
}

PlanOutcome run_plan(const ExperimentPlan& plan, const fs::path& out_dir, std::ostream* log) {
  plan.validate();
  fs::create_directories(out_dir / "cells");
  fs::create_directories(out_dir / "flips");
  PlanOutcome outcome;
  std::mutex mu;
  auto say = [&](const std::string& msg) {
    if (!log) return;
    std::lock_guard lock(mu);
    *log << msg << '\n' << std::flush;
  };

  // Datasets load up front: integrity problems abort the whole plan.
  std::map<std::string, DatasetBundle> data;
  for (const auto& name : plan.datasets) data.emplace(name, resolve_dataset(name, plan.data_dir));

  std::vector<DefenderSpec> defenders;
  for (const auto& d : plan.defenders) defenders.push_back(DefenderSpec::parse(d));

  // Cells in plan order; attacker `none` only exists at rate 0.
  std::vector<Cell> cells;
  for (const auto& ds : plan.datasets)
    for (const auto& def : plan.defenders)
      for (const auto& att : plan.attackers) {
        const bool clean = parse_attack(att) == AttackKind::none;
        const std::vector<double> rates = clean ? std::vector<double>{0.0} : plan.rates;
        for (double rate : rates)
          for (auto seed : plan.seeds)
            cells.push_back({ds, def, clean ? "none" : att, rate, seed,
                             cell_key(ds, def, clean ? "none" : att, rate, seed)});
      }
  // De-duplicate (e.g. attacker listed twice).
  {
    std::set<std::string> seen;
    std::erase_if(cells, [&](const Cell& c) { return !seen.insert(c.key).second; });
  }

  std::set<std::string> failed_keys;
  auto fail = [&](const std::string& key, const std::string& what) {
    std::lock_guard lock(mu);
    failed_keys.insert(key);
    outcome.failures.push_back(key + ": " + what);
  };
  auto cell_file = [&](const std::string& key) { return out_dir / "cells" / (key + ".json"); };

  std::vector<std::function<void()>> jobs;
  std::vector<std::string> job_keys;
  auto schedule = [&](const std::string& key, std::function<void()> job) {
    jobs.push_back(std::move(job));
    job_keys.push_back(key);
  };
  auto drain = [&] {
    run_jobs(jobs, plan.workers,
             [&](std::size_t i, const std::string& what) { fail(job_keys[i], what); });
    jobs.clear();
    job_keys.clear();
  };
  auto count_run = [&] {
    std::lock_guard lock(mu);
    ++outcome.cells_run;
  };

  auto model_for = [&](Arch arch) {
    return arch == Arch::gcn ? plan.settings.gcn : plan.settings.st_sparse;
  };
  auto defense_for = [&](DefenseKind kind) {
    DefenseSpec d = plan.settings.defense;
    d.kind = kind;
    return d;
  };
  auto train_for = [&](std::uint64_t seed) {
    TrainConfig t = plan.settings.train;
    t.seed = seed;
    return t;
  };

  // Phase 1: clean GCN reference cells, one per dataset and seed.
  for (const auto& ds : plan.datasets)
    for (auto seed : plan.seeds) {
      const std::string key = cell_key(ds, "gcn", "none", 0.0, seed);
      if (fs::exists(cell_file(key))) continue;
      schedule(key, [&, ds, seed, key] {
        say("clean reference " + key);
        const CellResult r = train_cell(data.at(ds).graph, plan.settings.gcn, train_for(seed),
                                        defense_for(DefenseKind::none));
        write_atomic(cell_file(key), cell_json(r));
        count_run();
      });
    }
  drain();

  // Phase 2: flip lists shared by every defender.
  std::set<std::string> flip_keys;
  for (const auto& c : cells) {
    if (c.attacker == "none") continue;
    const std::string fk = flips_key(c.dataset, c.attacker, c.rate, c.seed);
    if (!flip_keys.insert(fk).second || fs::exists(out_dir / "flips" / (fk + ".txt"))) continue;
    schedule(fk, [&, c, fk] {
      say("attack " + fk);
      AttackSpec spec = plan.settings.attack;
      spec.kind = parse_attack(c.attacker);
      spec.rate = c.rate;
      spec.seed = c.seed;
      const auto flips =
          run_attack(data.at(c.dataset).graph, plan.settings.gcn, train_for(c.seed), spec);
      write_atomic(out_dir / "flips" / (fk + ".txt"), flips_to_text(flips));
    });
  }
  drain();

  // Phase 3: defender cells on the (possibly) perturbed graphs.
  for (const auto& c : cells) {
    if (fs::exists(cell_file(c.key))) {
      ++outcome.cells_reused;
      continue;
    }
    const std::string fk = flips_key(c.dataset, c.attacker, c.rate, c.seed);
    if (c.attacker != "none" && failed_keys.contains(fk)) {
      fail(c.key, "attack failed");
      continue;
    }
    schedule(c.key, [&, c, fk] {
      say("cell " + c.key);
      const Graph& clean = data.at(c.dataset).graph;
      Graph g = clean;
      if (c.attacker != "none") {
        const fs::path file = out_dir / "flips" / (fk + ".txt");
        const auto flips = flips_from_text(read_file(file), file.string());
        g = apply_flips(clean, flips);
      }
      const DefenderSpec d = DefenderSpec::parse(c.defender);
      const CellResult r = train_cell(g, model_for(d.arch), train_for(c.seed), defense_for(d.defense));
      write_atomic(cell_file(c.key), cell_json(r));
      count_run();
    });
  }
  drain();

  // Phase 4: clean ablations of ST-SparseGCN.
  struct Ablation {
    std::string file;
    std::string column;
    std::string tag;
    std::vector<double> values;
  };
  std::vector<Ablation> ablations;
  if (!plan.alphas.empty()) ablations.push_back({"ablation_alpha.csv", "alpha", "alpha", plan.alphas});
  if (!plan.hidden_dims.empty()) {
    std::vector<double> dims(plan.hidden_dims.begin(), plan.hidden_dims.end());
    ablations.push_back({"ablation_dh.csv", "d_h", "dh", dims});
  }
  auto ablation_key = [](const std::string& ds, const Ablation& a, double v, std::uint64_t seed) {
    return cell_key(ds, "stsparse-" + a.tag + format_double(v), "none", 0.0, seed);
  };
  for (const auto& a : ablations)
    for (const auto& ds : plan.datasets)
      for (double v : a.values)
        for (auto seed : plan.seeds) {
          const std::string key = ablation_key(ds, a, v, seed);
          if (fs::exists(cell_file(key))) {
            ++outcome.cells_reused;
            continue;
          }
          schedule(key, [&, ds, v, seed, key, tag = a.tag] {
            say("ablation " + key);
            ModelConfig mc = plan.settings.st_sparse;
            if (tag == "alpha") mc.sparse.alpha = v;
            else mc.sparse.d_h = static_cast<int>(v);
            const CellResult r = train_cell(data.at(ds).graph, mc, train_for(seed),
                                            defense_for(DefenseKind::none));
            write_atomic(cell_file(key), cell_json(r));
            count_run();
          });
        }
  drain();

  // Assemble records from the cell files.
  std::map<std::string, double> clean_ref;
  for (const auto& ds : plan.datasets) {
    std::vector<double> accs;
    bool ok = true;
    for (auto seed : plan.seeds) {
      const fs::path f = cell_file(cell_key(ds, "gcn", "none", 0.0, seed));
      if (!fs::exists(f)) {
        ok = false;
        break;
      }
      accs.push_back(read_cell(f).acc);
    }
    if (ok) clean_ref[ds] = mean_of(accs);
  }
  for (const auto& c : cells) {
    if (!fs::exists(cell_file(c.key)) || !clean_ref.contains(c.dataset)) continue;
    const CellResult r = read_cell(cell_file(c.key));
    RunRecord rec{c.dataset, c.defender, c.attacker, c.rate, c.seed,
                  r.acc, clean_ref.at(c.dataset), 0.0, r.wall_s};
    try {
      rec.dr = dropping_rate(rec.acc, rec.clean_ref);
    } catch (const UndefinedMetricError& e) {
      fail(c.key, e.what());
      continue;
    }
    outcome.records.push_back(rec);
  }
  for (const auto& ds : plan.datasets)
    if (!clean_ref.contains(ds)) fail(ds, "clean reference accuracy unavailable");

  write_atomic(out_dir / "records.csv", records_to_csv(outcome.records));
  write_atomic(out_dir / "summary_mdr.csv",
               summary_mdr_csv(outcome.records, plan.rates, plan.seeds, DrFormula::literal));
  std::sort(outcome.failures.begin(), outcome.failures.end());
  {
    std::string text = "cell,error\n";
    for (const auto& f : outcome.failures) {
      std::string line = f;
      std::replace(line.begin(), line.end(), '\n', ' ');
      const auto colon = line.find(": ");
      std::string what = line.substr(colon + 2);
      std::replace(what.begin(), what.end(), ',', ';');
      text += line.substr(0, colon) + "," + what + "\n";
    }
    write_atomic(out_dir / "failures.csv", text);
  }
  write_accuracy_plots(out_dir, outcome.records);

  // Activation ratio per epoch of the first hidden layer, first dataset and
  // seed, for each defender trained on the clean graph.
  if (!plan.datasets.empty() && !plan.seeds.empty()) {
    const std::string& ds = plan.datasets.front();
    const auto seed = plan.seeds.front();
    std::vector<Series> series;
    std::set<std::string> plotted;
    auto add_trace = [&](const std::string& label, const std::string& key) {
      if (plotted.contains(label) || !fs::exists(cell_file(key))) return;
      const CellResult r = read_cell(cell_file(key));
      Series s{label, {}, {}};
      for (std::size_t e = 0; e < r.activation_ratio.size(); ++e)
        if (!r.activation_ratio[e].empty()) {
          s.x.push_back(static_cast<double>(e));
          s.y.push_back(r.activation_ratio[e].front());
        }
      plotted.insert(label);
      series.push_back(std::move(s));
    };
    add_trace("gcn", cell_key(ds, "gcn", "none", 0.0, seed));
    for (const auto& c : cells)
      if (c.dataset == ds && c.seed == seed && same_rate(c.rate, 0.0) &&
          c.defender.find('-') == std::string::npos)
        add_trace(c.defender, c.key);
    if (!series.empty())
      write_atomic(out_dir / "activation_ratio.svg",
                   line_chart_svg({"Hidden activation ratio (" + ds + ")", "epoch",
                                   "fraction of nonzero activations"},
                                  series));
  }

  for (const auto& a : ablations) {
    std::string text = "dataset," + a.column + ",seed,acc\n";
    for (const auto& ds : plan.datasets)
      for (double v : a.values)
        for (auto seed : plan.seeds) {
          const fs::path f = cell_file(ablation_key(ds, a, v, seed));
          if (!fs::exists(f)) continue;
          text += ds + "," + format_double(v) + "," + std::to_string(seed) + "," +
                  format_double(read_cell(f).acc) + "\n";
        }
    write_atomic(out_dir / a.file, text);
  }
  return outcome;
}

}  // namespace stsparse
