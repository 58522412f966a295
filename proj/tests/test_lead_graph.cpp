#include "doctest.h"

#include "mga/lead_graph.hpp"

using namespace mga;

TEST_CASE("pairs_to_matrix reproduces the worked four-token example") {
  const GraphPairs pairs = {{0, 1}, {1, 3}, {3, 2}, {2, 1}};
  const LeadGraph expected = LeadGraph::from_rows({{0, 1, 0, 0}, {0, 0, 0, 1}, {0, 1, 0, 0}, {0, 0, 1, 0}});
  CHECK(pairs_to_matrix(pairs, 4) == expected);
}

TEST_CASE("pairs_to_matrix edge cases") {
  CHECK(pairs_to_matrix({}, 3) == LeadGraph(3));
  const GraphPairs dup = {{0, 1}, {0, 1}, {2, 0}};
  const GraphPairs dedup = {{0, 1}, {2, 0}};
  CHECK(pairs_to_matrix(dup, 3) == pairs_to_matrix(dedup, 3));
  CHECK(pairs_to_matrix(dup, 3).count() == 2);
  CHECK_THROWS_AS(pairs_to_matrix({{0, 3}}, 3), InvalidInput);
  CHECK_THROWS_AS(LeadGraph::from_rows({{0, 1}, {1}}), InvalidInput);
}

TEST_CASE("fully connected pairs give the all-ones matrix") {
  CHECK(fully_connected_pairs(3).size() == 9);
  CHECK(pairs_to_matrix(fully_connected_pairs(3), 3) == LeadGraph::ones(3));
}

TEST_CASE("layer masks for one image and one question token") {
  const auto m = layer_masks(LeadGraph::from_rows({{0}}), LeadGraph::from_rows({{1}}));
  CHECK(m[0] == LeadGraph::from_rows({{0, 0}, {0, 1}}));
  CHECK(m[1] == LeadGraph::from_rows({{0, 1}, {1, 0}}));
  CHECK(m[2] == LeadGraph::from_rows({{0, 1}, {1, 1}}));
}

TEST_CASE("layer masks have the exact block structure") {
  const LeadGraph gi = pairs_to_matrix({{0, 1}, {2, 2}}, 3);
  const LeadGraph gq = pairs_to_matrix({{1, 0}}, 2);
  const auto m = layer_masks(gi, gq);
  const std::size_t ni = 3, nq = 2, n = 5;
  std::size_t layer1 = 0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const bool ri = r < ni, ci = c < ni;
      layer1 += m[0](r, c);
      CHECK(m[0](r, c) == (!ri && !ci));
      CHECK(m[1](r, c) == (ri != ci));
      if (ri && ci) CHECK(m[2](r, c) == gi(r, c));
      else if (!ri && !ci) CHECK(m[2](r, c) == gq(r - ni, c - ni));
      else CHECK(m[2](r, c));
    }
    CHECK_FALSE(m[1](r, r));
  }
  CHECK(layer1 == nq * nq);
}

TEST_CASE("layers past the third reuse the third mask") {
  const auto m = layer_masks(LeadGraph(2), LeadGraph::ones(1));
  CHECK(&mask_for_layer(m, 0) == &m[0]);
  CHECK(&mask_for_layer(m, 2) == &m[2]);
  CHECK(&mask_for_layer(m, 5) == &m[2]);
}

TEST_CASE("append_sep opens the SEP row and column") {
  CHECK(append_sep(LeadGraph(0)) == LeadGraph::from_rows({{1}}));
  CHECK(append_sep(LeadGraph(2)) == LeadGraph::from_rows({{0, 0, 1}, {0, 0, 1}, {1, 1, 1}}));
  CHECK(append_sep(LeadGraph(2), false) == LeadGraph::from_rows({{0, 0, 0}, {0, 0, 0}, {0, 0, 1}}));

  const Tensor tokens = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor out = append_sep_row(tokens, Tensor(Shape{2}, 9.0));
  CHECK(out == Tensor::matrix(3, 2, {1, 2, 3, 4, 9, 9}));
  CHECK_THROWS_AS(append_sep_row(tokens, Tensor(Shape{3})), InvalidInput);
}

TEST_CASE("lead graph text form") {
  const LeadGraph g = LeadGraph::from_rows({{0, 1}, {1, 1}});
  CHECK(g.to_text() == "0 1\n1 1\n");
  CHECK(g.is_symmetric());
  CHECK_FALSE(g.has_unit_diagonal());
  CHECK(LeadGraph::identity(3).has_unit_diagonal());
}
