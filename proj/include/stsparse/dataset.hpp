#ifndef STSPARSE_DATASET_HPP
#define STSPARSE_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include "stsparse/graph.hpp"

namespace stsparse {

/// Key-value manifest stored next to a bundle as `manifest.toml`.
struct Manifest {
  std::string name;
  Index n = 0;
  /// Lines of edges.tsv (before deduplication of reversed duplicates).
  Index edges = 0;
  Index d = 0;
  int C = 0;
  /// Hex FNV-1a 64 over edges, features, labels and splits, in that order.
  std::string digest;
};

struct DatasetBundle {
  std::string name;
  Graph graph;
  Manifest manifest;
};

Manifest read_manifest(const std::filesystem::path& file);
void write_manifest(const Manifest& m, const std::filesystem::path& file);

/// Digest of the bundle files found in `dir`.
std::string bundle_digest(const std::filesystem::path& dir);

/// Loads and verifies a bundle directory. Throws IntegrityError naming the
/// first manifest field that disagrees, ParseError on malformed lines. A
/// bundle without features.tsv gets identity features.
DatasetBundle load_dataset(const std::filesystem::path& dir,
                           const std::string& expected_name = "");

/// `fixture:<k>` names resolve to built-in fixtures; anything else is the
/// bundle directory `data_dir/<name>`.
DatasetBundle resolve_dataset(const std::string& name,
                              const std::filesystem::path& data_dir);

/// Writes `g` as a bundle (one line per undirected edge) with its manifest.
void save_bundle(const Graph& g, const std::string& name,
                 const std::filesystem::path& dir);

struct SplitSpec {
  int train_per_class = 20;
  Index val = 500;
  Index test = 1000;
  std::uint64_t seed = 0;
};

/// Seeded split: `train_per_class` nodes of each class, then `val` and
/// `test` nodes from the rest. Falls back to 10/10/80 percent when the graph
/// is too small for the fixed counts.
void make_split(std::span<const int> labels, int num_classes, const SplitSpec& spec,
                NodeMask& train, NodeMask& val, NodeMask& test);

/// LINQS `.content` + `.cites` (Cora, Citeseer) to a bundle. Citations naming
/// unknown papers are skipped. Returns the number of skipped lines.
Index convert_linqs(const std::filesystem::path& content,
                    const std::filesystem::path& cites, const std::string& name,
                    const SplitSpec& split, const std::filesystem::path& out_dir);

/// GML graph with a per-node `value` class (Polblogs) to a featureless
/// bundle. Self-loops are skipped. Returns the number of skipped edges.
Index convert_gml(const std::filesystem::path& gml, const std::string& name,
                  const SplitSpec& split, const std::filesystem::path& out_dir);

}  // namespace stsparse

#endif  // STSPARSE_DATASET_HPP
