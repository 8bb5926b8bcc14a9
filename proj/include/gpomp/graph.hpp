#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace gpomp {

inline constexpr std::size_t kUnreachable = std::numeric_limits<std::size_t>::max();

/// Finite undirected graph of spatial units with an interaction radius.
/// Vertex order is declaration order; shortest-path distances are computed
/// once by breadth-first search at construction.
class SpatialGraph {
 public:
  SpatialGraph(std::vector<std::string> labels, std::vector<std::pair<std::size_t, std::size_t>> edges,
               std::size_t radius);

  /// n vertices labelled "1".."n".
  static SpatialGraph path(std::size_t n, std::size_t radius = 1);
  static SpatialGraph complete(std::size_t n, std::size_t radius = 1);
  static SpatialGraph edgeless(std::size_t n, std::size_t radius = 1);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t radius() const noexcept { return radius_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const noexcept { return edges_; }

  /// Shortest-path length; kUnreachable across components.
  std::size_t distance(std::size_t v, std::size_t w) const { return dist_[v * size() + w]; }

  /// N(v): vertices within `radius` of v, ascending.  Always contains v.
  const std::vector<std::size_t>& neighborhood(std::size_t v) const { return neighborhoods_[v]; }

 private:
  std::vector<std::string> labels_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::size_t radius_;
  std::vector<std::size_t> dist_;
  std::vector<std::vector<std::size_t>> neighborhoods_;
};

/// Disjoint blocks covering every vertex.
class BlockPartition {
 public:
  BlockPartition(std::vector<std::vector<std::size_t>> blocks, std::size_t n_vertices);

  static BlockPartition whole(std::size_t n_vertices);

  std::size_t size() const noexcept { return blocks_.size(); }
  std::size_t n_vertices() const noexcept { return block_of_.size(); }
  const std::vector<std::size_t>& block(std::size_t k) const { return blocks_[k]; }
  const std::vector<std::vector<std::size_t>>& blocks() const noexcept { return blocks_; }
  std::size_t block_of(std::size_t v) const { return block_of_[v]; }

 private:
  std::vector<std::vector<std::size_t>> blocks_;
  std::vector<std::size_t> block_of_;
};

/// Consecutive blocks of `block_size` vertices in declaration order; the last
/// block may be smaller.  block_size >= |V| gives a single whole-graph block.
BlockPartition build_contiguous_partition(const SpatialGraph& graph, std::size_t block_size);

struct GraphStats {
  std::size_t max_neighborhood;     // Δ
  std::size_t max_block_neighbors;  // Δ_𝒦, counting the block itself
  std::size_t max_block_size;       // |𝒦|∞
  friend bool operator==(const GraphStats&, const GraphStats&) = default;
};

GraphStats graph_stats(const SpatialGraph& graph, const BlockPartition& partition);

/// min over pairs of shortest-path distance between two vertex sets.
std::size_t set_distance(const SpatialGraph& graph, const std::vector<std::size_t>& a,
                         const std::vector<std::size_t>& b);

/// r-inner boundary: vertices of `set` whose neighborhood leaves the set.
std::vector<std::size_t> inner_boundary(const SpatialGraph& graph, const std::vector<std::size_t>& set);

}  // namespace gpomp
