#include "stsparse/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "stsparse/errors.hpp"

namespace stsparse {

double dropping_rate(double acc, double clean_ref) {
  if (!(acc > 0.0))
    throw UndefinedMetricError("dropping rate undefined for accuracy " + format_double(acc));
  return (clean_ref - acc) / acc;
}

double conventional_dropping_rate(double acc, double clean_ref) {
  if (!(clean_ref > 0.0))
    throw UndefinedMetricError("dropping rate undefined for clean accuracy " +
                               format_double(clean_ref));
  return (clean_ref - acc) / clean_ref;
}

double dropping_rate(double acc, double clean_ref, DrFormula formula) {
  return formula == DrFormula::literal ? dropping_rate(acc, clean_ref)
                                       : conventional_dropping_rate(acc, clean_ref);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

namespace {

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos)
    throw ContractError("record field '" + s + "' contains a separator");
}

}  // namespace

std::string records_to_csv(std::span<const RunRecord> records) {
  std::string out = std::string(kRecordsHeader) + "\n";
  for (const auto& r : records) {
    check_field(r.dataset);
    check_field(r.defender);
    check_field(r.attacker);
    out += r.dataset + "," + r.defender + "," + r.attacker + "," + format_double(r.rate) +
           "," + std::to_string(r.seed) + "," + format_double(r.acc) + "," +
           format_double(r.clean_ref) + "," + format_double(r.dr) + "," +
           format_double(r.wall_s) + "\n";
  }
  return out;
}

std::vector<RunRecord> records_from_csv(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != kRecordsHeader) throw ParseError(source, 1, "unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream fields(line);
    for (std::string cell; std::getline(fields, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw ParseError(source, line_no, "expected 9 columns");
    try {
      RunRecord r;
      r.dataset = f[0];
      r.defender = f[1];
      r.attacker = f[2];
      r.rate = parse_double(f[3]);
      std::size_t used = 0;
      r.seed = std::stoull(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument(f[4]);
      r.acc = parse_double(f[5]);
      r.clean_ref = parse_double(f[6]);
      r.dr = parse_double(f[7]);
      r.wall_s = parse_double(f[8]);
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (line_no == 0) throw ParseError(source, 1, "missing header");
  return out;
}

void write_records(const std::filesystem::path& file, std::span<const RunRecord> records) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << records_to_csv(records);
}

std::vector<RunRecord> read_records(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return records_from_csv(ss.str(), file.string());
}

bool same_rate(double a, double b) { return std::abs(a - b) < 5e-7; }

std::vector<double> default_rate_grid() { return {0.0, 0.05, 0.10, 0.15, 0.20, 0.25}; }

double mean_dropping_rate(std::span<const RunRecord> group, std::span<const double> rates,
                          std::span<const std::uint64_t> seeds, DrFormula formula) {
  if (group.empty()) throw IncompleteGroupError("empty group");
  const auto& head = group.front();
  for (const auto& r : group)
    if (r.dataset != head.dataset || r.defender != head.defender || r.attacker != head.attacker)
      throw ContractError("group mixes datasets, defenders or attackers");
  std::vector<double> nonzero;
  for (double r : rates)
    if (!same_rate(r, 0.0)) nonzero.push_back(r);
  if (nonzero.empty()) throw IncompleteGroupError("rate grid has no nonzero rate");
  if (seeds.empty()) throw IncompleteGroupError("no seeds");

  // Incremental means return a constant input exactly.
  std::string missing;
  double mean = 0.0;
  int rate_count = 0;
  for (double rate : nonzero) {
    double per_rate = 0.0;
    int seed_count = 0;
    for (std::uint64_t seed : seeds) {
      const RunRecord* hit = nullptr;
      int count = 0;
      for (const auto& r : group)
        if (same_rate(r.rate, rate) && r.seed == seed) {
          hit = &r;
          ++count;
        }
      if (count != 1) {
        missing += " (rate " + format_double(rate) + ", seed " + std::to_string(seed) +
                   (count == 0 ? ")" : " duplicated)");
        continue;
      }
      const double dr = formula == DrFormula::literal
                            ? hit->dr
                            : dropping_rate(hit->acc, hit->clean_ref, formula);
      per_rate += (dr - per_rate) / ++seed_count;
    }
    mean += (per_rate - mean) / ++rate_count;
  }
  if (!missing.empty())
    throw IncompleteGroupError(head.dataset + "/" + head.defender + "/" + head.attacker +
                               " missing cells:" + missing);
  return mean;
}

double mean_dropping_rate(std::span<const RunRecord> group, DrFormula formula) {
  std::set<std::uint64_t> seed_set;
  for (const auto& r : group) seed_set.insert(r.seed);
  const std::vector<std::uint64_t> seeds(seed_set.begin(), seed_set.end());
  const auto rates = default_rate_grid();
  return mean_dropping_rate(group, rates, seeds, formula);
}

}  // namespace stsparse
