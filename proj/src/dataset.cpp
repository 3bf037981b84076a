#include "stsparse/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "stsparse/fixtures.hpp"

namespace stsparse {

namespace fs = std::filesystem;

namespace {

const char* const kBundleFiles[] = {"edges.tsv", "features.tsv", "labels.tsv", "splits.tsv"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool blank(const std::string& line) { return trim(line).empty(); }

std::ifstream open_input(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IntegrityError(file.filename().string(), "cannot open " + file.string());
  return in;
}

Index parse_index(const std::string& token, const std::string& source, std::size_t line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(token, &used);
    if (used != token.size() || v < 0) throw std::invalid_argument(token);
    return static_cast<Index>(v);
  } catch (const std::exception&) {
    throw ParseError(source, line, "expected a non-negative integer, got '" + token + "'");
  }
}

void check_node(Index id, Index n, const std::string& source, std::size_t line) {
  if (id >= n)
    throw ParseError(source, line,
                     "node id " + std::to_string(id) + " >= n = " + std::to_string(n));
}

std::string read_all(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
}

}  // namespace

Manifest read_manifest(const fs::path& file) {
  std::ifstream in = open_input(file);
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == '[') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(file.string(), line_no, "expected key = value");
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    kv[trim(t.substr(0, eq))] = value;
  }
  auto field = [&](const std::string& key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw IntegrityError(key, "manifest lacks '" + key + "'");
    return it->second;
  };
  auto number = [&](const std::string& key) {
    try {
      return static_cast<Index>(std::stoll(field(key)));
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw IntegrityError(key, "manifest field '" + key + "' is not an integer");
    }
  };
  Manifest m;
  m.name = field("name");
  m.n = number("n");
  m.edges = number("edges");
  m.d = number("d");
  m.C = static_cast<int>(number("C"));
  m.digest = field("digest");
  return m;
}

void write_manifest(const Manifest& m, const fs::path& file) {
  std::ostringstream out;
  out << "name = \"" << m.name << "\"\n"
      << "n = " << m.n << "\n"
      << "edges = " << m.edges << "\n"
      << "d = " << m.d << "\n"
      << "C = " << m.C << "\n"
      << "digest = \"" << m.digest << "\"\n";
  write_text(file, out.str());
}

std::string bundle_digest(const fs::path& dir) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const char* name : kBundleFiles) {
    if (!fs::exists(dir / name)) continue;
    for (unsigned char c : read_all(dir / name)) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

DatasetBundle load_dataset(const fs::path& dir, const std::string& expected_name) {
  const Manifest m = read_manifest(dir / "manifest.toml");
  if (!expected_name.empty() && m.name != expected_name)
    throw IntegrityError("name", "manifest names '" + m.name + "', expected '" +
                                     expected_name + "'");
  if (m.n < 1) throw IntegrityError("n", "manifest n must be positive");
  const Index n = m.n;

  // Edges: every non-blank line is one undirected edge; duplicates and
  // reversed duplicates collapse, self-loops are dropped.
  std::vector<std::pair<Index, Index>> edges;
  Index edge_lines = 0;
  {
    const std::string src = (dir / "edges.tsv").string();
    std::ifstream in = open_input(dir / "edges.tsv");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      std::istringstream fields(line);
      std::string a, b, extra;
      if (!(fields >> a >> b) || (fields >> extra))
        throw ParseError(src, line_no, "expected '<i>\\t<j>'");
      const Index i = parse_index(a, src, line_no), j = parse_index(b, src, line_no);
      check_node(i, n, src, line_no);
      check_node(j, n, src, line_no);
      ++edge_lines;
      if (i != j) edges.emplace_back(i, j);
    }
  }
  if (edge_lines != m.edges)
    throw IntegrityError("edges", "edges.tsv has " + std::to_string(edge_lines) +
                                      " lines, manifest says " + std::to_string(m.edges));

  Matrix features;
  if (fs::exists(dir / "features.tsv")) {
    if (m.d < 1) throw IntegrityError("d", "manifest d must be positive");
    features = Matrix::Zero(n, m.d);
    const std::string src = (dir / "features.tsv").string();
    std::ifstream in = open_input(dir / "features.tsv");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      std::istringstream fields(line);
      std::string id_token, pair;
      fields >> id_token;
      const Index id = parse_index(id_token, src, line_no);
      check_node(id, n, src, line_no);
      while (fields >> pair) {
        const auto colon = pair.find(':');
        if (colon == std::string::npos)
          throw ParseError(src, line_no, "expected idx:val, got '" + pair + "'");
        const Index idx = parse_index(pair.substr(0, colon), src, line_no);
        if (idx >= m.d)
          throw IntegrityError("d", src + ":" + std::to_string(line_no) + ": feature index " +
                                        std::to_string(idx) + " >= d = " + std::to_string(m.d));
        double val = 0.0;
        try {
          val = std::stod(pair.substr(colon + 1));
        } catch (const std::exception&) {
          throw ParseError(src, line_no, "bad feature value in '" + pair + "'");
        }
        features(id, idx) = val != 0.0 ? 1.0 : 0.0;
      }
    }
  } else {
    if (m.d != n)
      throw IntegrityError("d", "featureless bundle needs d = n for identity features");
    features = Matrix::Identity(n, n);
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  {
    const std::string src = (dir / "labels.tsv").string();
    std::ifstream in = open_input(dir / "labels.tsv");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      std::istringstream fields(line);
      std::string a, b, extra;
      if (!(fields >> a >> b) || (fields >> extra))
        throw ParseError(src, line_no, "expected '<id>\\t<label>'");
      const Index id = parse_index(a, src, line_no);
      check_node(id, n, src, line_no);
      const Index label = parse_index(b, src, line_no);
      if (label >= m.C)
        throw IntegrityError("C", src + ":" + std::to_string(line_no) + ": label " +
                                      std::to_string(label) + " >= C = " + std::to_string(m.C));
      labels[static_cast<std::size_t>(id)] = static_cast<int>(label);
    }
  }
  const auto missing = std::find(labels.begin(), labels.end(), -1);
  if (missing != labels.end())
    throw IntegrityError("n", "node " + std::to_string(missing - labels.begin()) +
                                  " has no label");
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  if (classes != m.C)
    throw IntegrityError("C", "labels use " + std::to_string(classes) +
                                  " classes, manifest says " + std::to_string(m.C));

  NodeMask train = NodeMask::Constant(n, false), val = train, test = train;
  {
    const std::string src = (dir / "splits.tsv").string();
    std::ifstream in = open_input(dir / "splits.tsv");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      std::istringstream fields(line);
      std::string a, part, extra;
      if (!(fields >> a >> part) || (fields >> extra))
        throw ParseError(src, line_no, "expected '<id>\\t<train|val|test|none>'");
      const Index id = parse_index(a, src, line_no);
      check_node(id, n, src, line_no);
      if (part == "train") train(id) = true;
      else if (part == "val") val(id) = true;
      else if (part == "test") test(id) = true;
      else if (part != "none") throw ParseError(src, line_no, "unknown split '" + part + "'");
    }
  }

  const std::string digest = bundle_digest(dir);
  if (digest != m.digest)
    throw IntegrityError("digest", "bundle digest " + digest + " differs from manifest " +
                                       m.digest);

  Graph g(adjacency_from_edges(n, edges), std::move(features), std::move(labels), m.C,
          std::move(train), std::move(val), std::move(test));
  return {m.name, std::move(g), m};
}

DatasetBundle resolve_dataset(const std::string& name, const fs::path& data_dir) {
  if (name.rfind("fixture:", 0) == 0) {
    Graph g = fixtures::by_name(name);
    Manifest m{name, g.num_nodes(), g.num_edges(), g.feature_dim(), g.num_classes(), ""};
    return {name, std::move(g), m};
  }
  if (data_dir.empty())
    throw ConfigError("dataset '" + name + "' needs a data directory");
  return load_dataset(data_dir / name, name);
}

void save_bundle(const Graph& g, const std::string& name, const fs::path& dir) {
  fs::create_directories(dir);
  std::string edges;
  for (const auto& [i, j] : edge_list(g.adjacency()))
    edges += std::to_string(i) + "\t" + std::to_string(j) + "\n";
  write_text(dir / "edges.tsv", edges);
  std::string feats;
  for (Index i = 0; i < g.num_nodes(); ++i) {
    feats += std::to_string(i);
    for (Index k = 0; k < g.feature_dim(); ++k)
      if (g.features()(i, k) != 0.0) feats += " " + std::to_string(k) + ":1";
    feats += "\n";
  }
  write_text(dir / "features.tsv", feats);
  std::string labels, splits;
  for (Index i = 0; i < g.num_nodes(); ++i) {
    labels += std::to_string(i) + "\t" + std::to_string(g.labels()[static_cast<std::size_t>(i)]) + "\n";
    const char* part = g.train_mask()(i) ? "train"
                       : g.val_mask()(i) ? "val"
                       : g.test_mask()(i) ? "test"
                                          : "none";
    splits += std::to_string(i) + "\t" + part + "\n";
  }
  write_text(dir / "labels.tsv", labels);
  write_text(dir / "splits.tsv", splits);
  write_manifest({name, g.num_nodes(), g.num_edges(), g.feature_dim(), g.num_classes(),
                  bundle_digest(dir)},
                 dir / "manifest.toml");
}

void make_split(std::span<const int> labels, int num_classes, const SplitSpec& spec,
                NodeMask& train, NodeMask& val, NodeMask& test) {
  const Index n = static_cast<Index>(labels.size());
  train = NodeMask::Constant(n, false);
  val = train;
  test = train;
  std::mt19937_64 rng(spec.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);

  const Index fixed = static_cast<Index>(spec.train_per_class) * num_classes + spec.val + spec.test;
  if (fixed > n) {
    const Index n_train = n / 10, n_val = n / 10;
    for (Index r = 0; r < n; ++r) {
      const Index i = order[static_cast<std::size_t>(r)];
      (r < n_train ? train : r < n_train + n_val ? val : test)(i) = true;
    }
    return;
  }
  std::vector<int> taken(static_cast<std::size_t>(num_classes), 0);
  std::vector<Index> rest;
  for (Index i : order) {
    int& t = taken[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    if (t < spec.train_per_class) {
      ++t;
      train(i) = true;
    } else {
      rest.push_back(i);
    }
  }
  for (std::size_t r = 0; r < rest.size(); ++r) {
    const auto idx = static_cast<Index>(r);
    if (idx < spec.val) val(rest[r]) = true;
    else if (idx < spec.val + spec.test) test(rest[r]) = true;
  }
}

namespace {

void write_converted(const std::string& name, Index n, Index d, int classes,
                     const std::string& edges, const std::string* features,
                     const std::vector<int>& labels, const SplitSpec& split,
                     const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "edges.tsv", edges);
  if (features) write_text(out_dir / "features.tsv", *features);
  else fs::remove(out_dir / "features.tsv");
  NodeMask train, val, test;
  make_split(labels, classes, split, train, val, test);
  std::string label_text, split_text;
  for (Index i = 0; i < n; ++i) {
    label_text += std::to_string(i) + "\t" + std::to_string(labels[static_cast<std::size_t>(i)]) + "\n";
    split_text += std::to_string(i) + "\t" +
                  (train(i) ? "train" : val(i) ? "val" : test(i) ? "test" : "none") + "\n";
  }
  write_text(out_dir / "labels.tsv", label_text);
  write_text(out_dir / "splits.tsv", split_text);
  const Index edge_lines = static_cast<Index>(std::count(edges.begin(), edges.end(), '\n'));
  write_manifest({name, n, edge_lines, d, classes, bundle_digest(out_dir)},
                 out_dir / "manifest.toml");
}

}  // namespace

Index convert_linqs(const fs::path& content, const fs::path& cites, const std::string& name,
                    const SplitSpec& split, const fs::path& out_dir) {
  std::map<std::string, Index> ids;
  std::vector<std::vector<Index>> rows;
  std::vector<std::string> class_names;
  Index d = -1;
  {
    std::ifstream in = open_input(content);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      std::istringstream fields(line);
      std::vector<std::string> tok;
      for (std::string t; fields >> t;) tok.push_back(t);
      if (tok.size() < 3) throw ParseError(content.string(), line_no, "too few columns");
      const Index width = static_cast<Index>(tok.size()) - 2;
      if (d >= 0 && width != d)
        throw ParseError(content.string(), line_no, "inconsistent feature count");
      d = width;
      if (!ids.emplace(tok.front(), static_cast<Index>(rows.size())).second)
        throw ParseError(content.string(), line_no, "duplicate paper id " + tok.front());
      std::vector<Index> active;
      for (Index k = 0; k < width; ++k)
        if (tok[static_cast<std::size_t>(k + 1)] != "0") active.push_back(k);
      rows.push_back(std::move(active));
      class_names.push_back(tok.back());
    }
  }
  std::vector<std::string> classes = class_names;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  std::vector<int> labels;
  for (const auto& c : class_names)
    labels.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), c) -
                                      classes.begin()));

  std::string edges;
  Index skipped = 0;
  {
    std::ifstream in = open_input(cites);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      std::istringstream fields(line);
      std::string a, b;
      if (!(fields >> a >> b)) throw ParseError(cites.string(), line_no, "expected two ids");
      const auto ia = ids.find(a), ib = ids.find(b);
      if (ia == ids.end() || ib == ids.end()) {
        ++skipped;
        continue;
      }
      edges += std::to_string(ia->second) + "\t" + std::to_string(ib->second) + "\n";
    }
  }
  std::string features;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    features += std::to_string(i);
    for (Index k : rows[i]) features += " " + std::to_string(k) + ":1";
    features += "\n";
  }
  write_converted(name, static_cast<Index>(rows.size()), d, static_cast<int>(classes.size()),
                  edges, &features, labels, split, out_dir);
  return skipped;
}

Index convert_gml(const fs::path& gml, const std::string& name, const SplitSpec& split,
                  const fs::path& out_dir) {
  // Minimal GML reader: nodes carry `id` and `value`, edges `source` and
  // `target`; everything else is ignored.
  std::ifstream in = open_input(gml);
  std::map<long long, Index> ids;
  std::vector<int> labels;
  std::vector<std::pair<long long, long long>> raw_edges;
  std::string token, block, pending_key;
  long long id = -1, source = -1, target = -1;
  int value = -1;
  int depth = 0;
  auto read_value = [&](std::string v) {
    // Quoted values may contain spaces.
    while (!v.empty() && v.front() == '"' && (v.size() == 1 || v.back() != '"')) {
      std::string more;
      if (!(in >> more)) break;
      v += " " + more;
    }
    return v;
  };
  auto number = [&](const std::string& key, const std::string& v) {
    try {
      return std::stoll(v);
    } catch (const std::exception&) {
      throw ParseError(gml.string(), 0, "non-numeric " + key + " '" + v + "'");
    }
  };
  while (in >> token) {
    if (token == "[") {
      ++depth;
      if (depth == 2) {
        block = pending_key;
        id = source = target = -1;
        value = -1;
      }
      continue;
    }
    if (token == "]") {
      if (depth == 2) {
        if (block == "node") {
          if (id < 0 || value < 0)
            throw ParseError(gml.string(), 0, "node without id or value");
          ids.emplace(id, static_cast<Index>(labels.size()));
          labels.push_back(value);
        } else if (block == "edge") {
          raw_edges.emplace_back(source, target);
        }
      }
      --depth;
      continue;
    }
    if (depth == 2) {
      std::string v;
      if (!(in >> v)) break;
      if (v == "[") {
        ++depth;
        continue;
      }
      v = read_value(v);
      if (block == "node" && token == "id") id = number(token, v);
      else if (block == "node" && token == "value") value = static_cast<int>(number(token, v));
      else if (block == "edge" && token == "source") source = number(token, v);
      else if (block == "edge" && token == "target") target = number(token, v);
      continue;
    }
    pending_key = token;
  }
  std::string edges;
  Index skipped = 0;
  for (const auto& [s, t] : raw_edges) {
    const auto is = ids.find(s), it = ids.find(t);
    if (is == ids.end() || it == ids.end() || s == t) {
      ++skipped;
      continue;
    }
    edges += std::to_string(is->second) + "\t" + std::to_string(it->second) + "\n";
  }
  const Index n = static_cast<Index>(labels.size());
  const int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  write_converted(name, n, n, classes, edges, nullptr, labels, split, out_dir);
  return skipped;
}

}  // namespace stsparse
