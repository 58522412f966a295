#include "mga/lead_graph.hpp"

#include <ostream>
#include <sstream>

namespace mga {

LeadGraph::LeadGraph(std::size_t n, bool fill) : n_(n), cells_(n * n, fill ? 1 : 0) {}

LeadGraph LeadGraph::identity(std::size_t n) {
  LeadGraph g(n);
  for (std::size_t i = 0; i < n; ++i) g.set(i, i);
  return g;
}

LeadGraph LeadGraph::from_rows(const std::vector<std::vector<int>>& rows) {
  LeadGraph g(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.size()) throw InvalidInput("lead graph rows are not square");
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (rows[r][c] != 0 && rows[r][c] != 1) throw InvalidInput("lead graph entries must be 0/1");
      g.set(r, c, rows[r][c] == 1);
    }
  }
  return g;
}

std::size_t LeadGraph::count() const {
  std::size_t c = 0;
  for (auto v : cells_) c += v;
  return c;
}

bool LeadGraph::is_symmetric() const {
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if ((*this)(i, j) != (*this)(j, i)) return false;
  return true;
}

bool LeadGraph::has_unit_diagonal() const {
  for (std::size_t i = 0; i < n_; ++i)
    if (!(*this)(i, i)) return false;
  return true;
}

LeadGraph LeadGraph::block(std::size_t r0, std::size_t c0, std::size_t n) const {
  if (r0 + n > n_ || c0 + n > n_) throw InvalidInput("lead graph block out of range");
  LeadGraph g(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.set(i, j, (*this)(r0 + i, c0 + j));
  return g;
}

std::string LeadGraph::to_text() const {
  std::ostringstream os;
  os << *this;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const LeadGraph& g) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (j) os << ' ';
      os << (g(i, j) ? '1' : '0');
    }
    os << '\n';
  }
  return os;
}

LeadGraph pairs_to_matrix(const GraphPairs& pairs, std::size_t n) {
  LeadGraph g(n);
  for (const auto& p : pairs) {
    if (p.src >= n || p.dst >= n) {
      throw InvalidInput("graph pair (" + std::to_string(p.src) + ", " + std::to_string(p.dst) +
                         ") out of range for " + std::to_string(n) + " tokens");
    }
    g.set(p.src, p.dst);
  }
  return g;
}

GraphPairs fully_connected_pairs(std::size_t n) {
  GraphPairs pairs;
  pairs.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) pairs.push_back({i, j});
  return pairs;
}

std::array<LeadGraph, 3> layer_masks(const LeadGraph& image, const LeadGraph& question) {
  const std::size_t ni = image.size(), nq = question.size(), n = ni + nq;
  std::array<LeadGraph, 3> masks{LeadGraph(n), LeadGraph(n), LeadGraph(n)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const bool r_img = r < ni, c_img = c < ni;
      masks[0].set(r, c, !r_img && !c_img);
      masks[1].set(r, c, r_img != c_img);
      if (r_img && c_img) {
        masks[2].set(r, c, image(r, c));
      } else if (!r_img && !c_img) {
        masks[2].set(r, c, question(r - ni, c - ni));
      } else {
        masks[2].set(r, c, true);
      }
    }
  }
  return masks;
}

const LeadGraph& mask_for_layer(const std::array<LeadGraph, 3>& masks, std::size_t layer) {
  return masks[layer < 3 ? layer : 2];
}

LeadGraph append_sep(const LeadGraph& image, bool connect) {
  const std::size_t n = image.size();
  LeadGraph g(n + 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.set(i, j, image(i, j));
  for (std::size_t i = 0; i <= n; ++i) {
    g.set(n, i, connect);
    g.set(i, n, connect);
  }
  g.set(n, n, true);
  return g;
}

Tensor append_sep_row(const Tensor& tokens, const Tensor& sep) {
  const std::size_t d = sep.size();
  if (!tokens.empty() && tokens.cols() != d) {
    throw InvalidInput("append_sep_row: token width " + std::to_string(tokens.cols()) +
                       " vs SEP width " + std::to_string(d));
  }
  const std::size_t n = tokens.empty() ? 0 : tokens.rows();
  std::vector<double> data(tokens.data().begin(), tokens.data().end());
  data.insert(data.end(), sep.data().begin(), sep.data().end());
  return Tensor({n + 1, d}, std::move(data));
}

}  // namespace mga
