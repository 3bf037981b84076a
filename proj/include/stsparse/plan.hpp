#ifndef STSPARSE_PLAN_HPP
#define STSPARSE_PLAN_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stsparse/config.hpp"
#include "stsparse/metrics.hpp"

namespace stsparse {

/// A model trained after an optional preprocessing defense. Names:
/// gcn, stsparse, gcn-jaccard, gcn-svd, stsparse-jaccard, stsparse-svd.
struct DefenderSpec {
  std::string name;
  Arch arch = Arch::gcn;
  DefenseKind defense = DefenseKind::none;

  static DefenderSpec parse(const std::string& name);
};

struct ExperimentPlan {
  std::vector<std::string> datasets;
  std::vector<std::string> defenders = {"gcn", "stsparse"};
  /// none, dice, pgd, minmax. `none` contributes one clean cell per seed.
  std::vector<std::string> attackers = {"dice"};
  std::vector<double> rates = default_rate_grid();
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  /// Clean ST-SparseGCN ablations; empty means no sweep.
  std::vector<double> alphas;
  std::vector<int> hidden_dims;
  RunSettings settings;
  std::filesystem::path data_dir;
  int workers = 1;

  /// Throws ConfigError on unknown names or out-of-range values.
  void validate() const;

  /// plan.* keys plus the run settings. `base_seed` seeds {b, ..., b+4}
  /// when plan.seeds is absent.
  static ExperimentPlan from_config(const KeyValueConfig& cfg, std::uint64_t base_seed = 0);
};

struct PlanOutcome {
  std::vector<RunRecord> records;
  /// "<cell>: <error>" for each cell that failed in this run.
  std::vector<std::string> failures;
  std::size_t cells_run = 0;
  std::size_t cells_reused = 0;

  bool complete() const { return failures.empty(); }
};

/// Runs every cell not already on disk under `out_dir`, then rewrites
/// records.csv, summary_mdr.csv, failures.csv, the SVG plots and, when the
/// plan sweeps them, ablation_alpha.csv / ablation_dh.csv. Cell results are
/// written atomically, so an interrupted run resumes where it stopped and a
/// completed run reproduces its outputs byte for byte.
PlanOutcome run_plan(const ExperimentPlan& plan, const std::filesystem::path& out_dir,
                     std::ostream* log = nullptr);

/// Defender x attacker mDR table per dataset ("NA" where a group is
/// incomplete or has no nonzero rate).
std::string summary_mdr_csv(std::span<const RunRecord> records, std::span<const double> rates,
                            std::span<const std::uint64_t> seeds, DrFormula formula);

/// Regenerates summary_mdr.csv (and the accuracy plots) from records.csv in
/// `out_dir`, using the rates and seeds present in the records.
void write_reports(const std::filesystem::path& out_dir, DrFormula formula);

/// Cell identifiers are also file names.
std::string cell_key(const std::string& dataset, const std::string& defender,
                     const std::string& attacker, double rate, std::uint64_t seed);

}  // namespace stsparse

#endif  // STSPARSE_PLAN_HPP
