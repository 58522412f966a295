#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mga/tensor.hpp"

namespace mga {

/// Directed (source, destination) index pairs over a token sequence.
struct GraphPair {
  std::size_t src = 0;
  std::size_t dst = 0;
  friend bool operator==(const GraphPair&, const GraphPair&) = default;
  friend auto operator<=>(const GraphPair&, const GraphPair&) = default;
};
using GraphPairs = std::vector<GraphPair>;

/// Square binary mask over token positions. Row i lists the positions
/// token i may attend to.
class LeadGraph {
 public:
  LeadGraph() = default;
  explicit LeadGraph(std::size_t n, bool fill = false);

  static LeadGraph ones(std::size_t n) { return LeadGraph(n, true); }
  static LeadGraph identity(std::size_t n);
  /// Parses rows of 0/1 values; throws InvalidInput for non-square input.
  static LeadGraph from_rows(const std::vector<std::vector<int>>& rows);

  std::size_t size() const { return n_; }
  bool operator()(std::size_t r, std::size_t c) const { return cells_[r * n_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { cells_[r * n_ + c] = v ? 1 : 0; }

  const std::vector<std::uint8_t>& cells() const { return cells_; }
  std::size_t count() const;
  bool is_symmetric() const;
  bool has_unit_diagonal() const;

  /// Block [r0, r0+rows) x [c0, c0+cols) copied out as a new square graph
  /// (rows must equal cols).
  LeadGraph block(std::size_t r0, std::size_t c0, std::size_t n) const;

  /// One text row per matrix row, entries "0"/"1" separated by spaces.
  std::string to_text() const;

  friend bool operator==(const LeadGraph&, const LeadGraph&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> cells_;
};

std::ostream& operator<<(std::ostream& os, const LeadGraph& g);

/// matrix[src][dst] = 1 for each pair; throws InvalidInput if an index >= n.
LeadGraph pairs_to_matrix(const GraphPairs& pairs, std::size_t n);

/// All ordered pairs (i, j) over n tokens, self pairs included.
GraphPairs fully_connected_pairs(std::size_t n);

/// The three per-layer multimodal masks over [image ; question] positions:
///   layer 1: only the question-question block is open,
///   layer 2: only the two cross-modal blocks are open,
///   layer 3: [[G_I, 1], [1, G_Q]].
std::array<LeadGraph, 3> layer_masks(const LeadGraph& image, const LeadGraph& question);

/// Mask for encoder layer `layer` (0-based) of a stack. Layers past the third
/// reuse the third mask.
const LeadGraph& mask_for_layer(const std::array<LeadGraph, 3>& masks, std::size_t layer);

/// Image-side lead graph after appending one SEP position at the end. With
/// `connect` the SEP row and column are all ones; otherwise SEP only sees
/// itself.
LeadGraph append_sep(const LeadGraph& image, bool connect = true);

/// Appends the SEP row to an image token matrix [nI x d] -> [(nI+1) x d].
Tensor append_sep_row(const Tensor& tokens, const Tensor& sep);

}  // namespace mga
