#include "gpomp/graph.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace gpomp {

namespace {

std::vector<std::string> numbered_labels(std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::to_string(i + 1));
  return out;
}

}  // namespace

SpatialGraph::SpatialGraph(std::vector<std::string> labels,
                           std::vector<std::pair<std::size_t, std::size_t>> edges, std::size_t radius)
    : labels_(std::move(labels)), edges_(std::move(edges)), radius_(radius) {
  const std::size_t n = labels_.size();
  if (n == 0) throw std::invalid_argument("graph must have at least one vertex");

  std::vector<std::vector<std::size_t>> adjacency(n);
  for (auto [a, b] : edges_) {
    if (a >= n || b >= n) throw std::invalid_argument("edge references unknown vertex");
    if (a == b) continue;
    adjacency[a].push_back(b);
    adjacency[b].push_back(a);
  }

  dist_.assign(n * n, kUnreachable);
  std::deque<std::size_t> queue;
  for (std::size_t s = 0; s < n; ++s) {
    std::size_t* row = dist_.data() + s * n;
    row[s] = 0;
    queue.assign(1, s);
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t w : adjacency[u]) {
        if (row[w] == kUnreachable) {
          row[w] = row[u] + 1;
          queue.push_back(w);
        }
      }
    }
  }

  neighborhoods_.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t w = 0; w < n; ++w) {
      if (distance(v, w) <= radius_) neighborhoods_[v].push_back(w);
    }
  }
}

SpatialGraph SpatialGraph::path(std::size_t n, std::size_t radius) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return SpatialGraph(numbered_labels(n), std::move(edges), radius);
}

SpatialGraph SpatialGraph::complete(std::size_t n, std::size_t radius) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return SpatialGraph(numbered_labels(n), std::move(edges), radius);
}

SpatialGraph SpatialGraph::edgeless(std::size_t n, std::size_t radius) {
  return SpatialGraph(numbered_labels(n), {}, radius);
}

BlockPartition::BlockPartition(std::vector<std::vector<std::size_t>> blocks, std::size_t n_vertices)
    : blocks_(std::move(blocks)), block_of_(n_vertices, kUnreachable) {
  if (blocks_.empty()) throw std::invalid_argument("partition has no blocks");
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    if (blocks_[k].empty()) throw std::invalid_argument("partition contains an empty block");
    for (std::size_t v : blocks_[k]) {
      if (v >= n_vertices) throw std::invalid_argument("partition references unknown vertex");
      if (block_of_[v] != kUnreachable) throw std::invalid_argument("partition blocks overlap");
      block_of_[v] = k;
    }
  }
  if (std::find(block_of_.begin(), block_of_.end(), kUnreachable) != block_of_.end())
    throw std::invalid_argument("partition does not cover every vertex");
}

BlockPartition BlockPartition::whole(std::size_t n_vertices) {
  std::vector<std::size_t> all(n_vertices);
  for (std::size_t v = 0; v < n_vertices; ++v) all[v] = v;
  return BlockPartition({std::move(all)}, n_vertices);
}

BlockPartition build_contiguous_partition(const SpatialGraph& graph, std::size_t block_size) {
  if (block_size == 0) throw std::invalid_argument("block size must be positive");
  const std::size_t n = graph.size();
  std::vector<std::vector<std::size_t>> blocks;
  for (std::size_t start = 0; start < n; start += block_size) {
    std::vector<std::size_t> block;
    for (std::size_t v = start; v < std::min(n, start + block_size); ++v) block.push_back(v);
    blocks.push_back(std::move(block));
  }
  return BlockPartition(std::move(blocks), n);
}

std::size_t set_distance(const SpatialGraph& graph, const std::vector<std::size_t>& a,
                         const std::vector<std::size_t>& b) {
  std::size_t best = kUnreachable;
  for (std::size_t v : a)
    for (std::size_t w : b) best = std::min(best, graph.distance(v, w));
  return best;
}

std::vector<std::size_t> inner_boundary(const SpatialGraph& graph, const std::vector<std::size_t>& set) {
  std::vector<std::size_t> out;
  for (std::size_t v : set) {
    for (std::size_t w : graph.neighborhood(v)) {
      if (std::find(set.begin(), set.end(), w) == set.end()) {
        out.push_back(v);
        break;
      }
    }
  }
  return out;
}

GraphStats graph_stats(const SpatialGraph& graph, const BlockPartition& partition) {
  if (partition.n_vertices() != graph.size())
    throw std::invalid_argument("partition does not match graph size");
  GraphStats stats{0, 0, 0};
  for (std::size_t v = 0; v < graph.size(); ++v)
    stats.max_neighborhood = std::max(stats.max_neighborhood, graph.neighborhood(v).size());
  for (const auto& block : partition.blocks()) {
    stats.max_block_size = std::max(stats.max_block_size, block.size());
    std::size_t interacting = 0;
    for (const auto& other : partition.blocks())
      if (set_distance(graph, block, other) <= graph.radius()) ++interacting;
    stats.max_block_neighbors = std::max(stats.max_block_neighbors, interacting);
  }
  return stats;
}

}  // namespace gpomp
