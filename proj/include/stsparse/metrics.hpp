#ifndef STSPARSE_METRICS_HPP
#define STSPARSE_METRICS_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace stsparse {

/// (clean_ref - acc) / acc. Throws UndefinedMetricError when acc <= 0.
double dropping_rate(double acc, double clean_ref);
/// (clean_ref - acc) / clean_ref, for comparison with the usual definition.
double conventional_dropping_rate(double acc, double clean_ref);

enum class DrFormula { literal, conventional };

double dropping_rate(double acc, double clean_ref, DrFormula formula);

struct RunRecord {
  std::string dataset;
  std::string defender;
  std::string attacker;
  double rate = 0.0;
  std::uint64_t seed = 0;
  double acc = 0.0;
  double clean_ref = 0.0;
  double dr = 0.0;
  double wall_s = 0.0;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline constexpr const char* kRecordsHeader =
    "dataset,defender,attacker,rate,seed,acc,clean_ref,dr,wall_s";

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
double parse_double(const std::string& s);

std::string records_to_csv(std::span<const RunRecord> records);
std::vector<RunRecord> records_from_csv(const std::string& text,
                                        const std::string& source = "records.csv");
void write_records(const std::filesystem::path& file, std::span<const RunRecord> records);
std::vector<RunRecord> read_records(const std::filesystem::path& file);

/// Mean over the nonzero rates of `rates` of the seed-averaged DR of one
/// defender x attacker x dataset group. Every (rate, seed) cell must be
/// present exactly once, otherwise IncompleteGroupError lists the gaps.
double mean_dropping_rate(std::span<const RunRecord> group, std::span<const double> rates,
                          std::span<const std::uint64_t> seeds,
                          DrFormula formula = DrFormula::literal);

/// Grid taken from the group itself: the rates {0.05, ..., 0.25} and every
/// seed that appears in it.
double mean_dropping_rate(std::span<const RunRecord> group,
                          DrFormula formula = DrFormula::literal);

/// The perturbation-rate grid {0, 0.05, 0.10, 0.15, 0.20, 0.25}.
std::vector<double> default_rate_grid();

/// Rates compare equal when they print identically to 6 decimals.
bool same_rate(double a, double b);

}  // namespace stsparse

#endif  // STSPARSE_METRICS_HPP
