#include "stsparse/fixtures.hpp"

namespace stsparse::fixtures {

namespace {

NodeMask mask_of(Index n, std::initializer_list<Index> members) {
  NodeMask m = NodeMask::Constant(n, false);
  for (Index i : members) m(i) = true;
  return m;
}

Matrix rows_of(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index r = 0;
  for (const auto& row : rows) {
    Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

Graph two_node() {
  const std::pair<Index, Index> edges[] = {{0, 1}};
  return Graph(adjacency_from_edges(2, edges), rows_of({{1, 0}, {0, 1}}), {0, 1}, 2,
               mask_of(2, {0}), mask_of(2, {}), mask_of(2, {1}));
}

Graph four_node() {
  const std::pair<Index, Index> edges[] = {{0, 1}, {1, 2}, {2, 3}};
  return Graph(adjacency_from_edges(4, edges),
               rows_of({{1, 1, 0}, {1, 0, 0}, {0, 1, 1}, {0, 0, 1}}), {0, 0, 1, 1}, 2,
               mask_of(4, {0, 3}), mask_of(4, {1}), mask_of(4, {2}));
}

Graph six_node() {
  const std::pair<Index, Index> edges[] = {{0, 1}, {0, 2}, {1, 2}, {2, 3},
                                           {3, 4}, {3, 5}, {4, 5}};
  return Graph(adjacency_from_edges(6, edges),
               rows_of({{1, 0, 1, 0},
                        {1, 0, 0, 0},
                        {1, 1, 0, 0},
                        {0, 1, 0, 1},
                        {0, 0, 0, 1},
                        {0, 0, 1, 1}}),
               {0, 0, 0, 1, 1, 1}, 2, mask_of(6, {0, 1, 3, 4}), mask_of(6, {2}),
               mask_of(6, {5}));
}

Graph eight_node() {
  std::vector<std::pair<Index, Index>> edges;
  for (Index base : {0, 4})
    for (Index i = 0; i < 4; ++i)
      for (Index j = i + 1; j < 4; ++j) edges.emplace_back(base + i, base + j);
  edges.emplace_back(3, 4);
  return Graph(adjacency_from_edges(8, edges),
               rows_of({{1, 1, 0, 0, 0, 1},
                        {1, 0, 1, 0, 0, 0},
                        {1, 1, 0, 0, 1, 0},
                        {0, 1, 1, 0, 0, 1},
                        {0, 0, 0, 1, 1, 0},
                        {0, 0, 1, 1, 0, 1},
                        {0, 1, 0, 1, 1, 0},
                        {1, 0, 0, 0, 1, 1}}),
               {0, 0, 0, 0, 1, 1, 1, 1}, 2, mask_of(8, {0, 1, 4, 5}),
               mask_of(8, {2, 6}), mask_of(8, {3, 7}));
}

Graph by_name(const std::string& name) {
  if (name == "fixture:2") return two_node();
  if (name == "fixture:4") return four_node();
  if (name == "fixture:6") return six_node();
  if (name == "fixture:8") return eight_node();
  throw ConfigError("unknown fixture '" + name + "'");
}

}  // namespace stsparse::fixtures
