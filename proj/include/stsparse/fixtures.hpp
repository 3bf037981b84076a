#ifndef STSPARSE_FIXTURES_HPP
#define STSPARSE_FIXTURES_HPP

#include <string>

#include "stsparse/graph.hpp"

namespace stsparse::fixtures {

/// One edge, two classes; train {0}, test {1}.
Graph two_node();
/// Path 0-1-2-3 with 3 binary features; train {0,3}, val {1}, test {2}.
Graph four_node();
/// Triangles {0,1,2} and {3,4,5} joined by 2-3; train {0,1,3,4}, val {2},
/// test {5}.
Graph six_node();
/// Cliques {0..3} and {4..7} joined by 3-4, 6 binary features; train
/// {0,1,4,5}, val {2,6}, test {3,7}.
Graph eight_node();

/// "fixture:2", "fixture:4", "fixture:6", "fixture:8".
Graph by_name(const std::string& name);

}  // namespace stsparse::fixtures

#endif  // STSPARSE_FIXTURES_HPP
