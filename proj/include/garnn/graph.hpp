// Directed sensor graph built from pairwise (possibly asymmetric) distances.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "garnn/autodiff.hpp"
#include "garnn/errors.hpp"

namespace garnn {

struct DistanceRecord {
  std::string from;
  std::string to;
  double distance = 0.0;
};

/// NB(i) for every vertex: ascending indices, always containing i itself.
using NeighborSets = RowSupport;

class SensorGraph {
 public:
  SensorGraph() = default;
  SensorGraph(std::vector<std::string> vertex_ids, std::vector<std::uint8_t> adjacency);

  std::size_t size() const { return ids_.size(); }
  bool edge(std::size_t from, std::size_t to) const { return adjacency_[from * size() + to] != 0; }
  std::size_t edge_count() const;
  const std::vector<std::string>& vertex_ids() const { return ids_; }
  std::optional<std::size_t> index_of(const std::string& id) const;
  const std::vector<std::uint8_t>& adjacency() const { return adjacency_; }

  /// Raw distances (row-major NxN, NaN where no record), when built from records.
  const std::vector<double>& distances() const { return distances_; }
  void set_distances(std::vector<double> d) { distances_ = std::move(d); }

  friend bool operator==(const SensorGraph& a, const SensorGraph& b) {
    return a.ids_ == b.ids_ && a.adjacency_ == b.adjacency_;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<std::uint8_t> adjacency_;
  std::vector<double> distances_;
};

/// E[i,j] = 1 iff a record (i, j, d) has d < threshold. Without vertex_ids,
/// vertices are numbered in first-appearance order over the records. With
/// vertex_ids, that order is used, records naming other ids are rejected,
/// and listed vertices without records stay isolated.
SensorGraph build_graph(std::span<const DistanceRecord> records, double threshold,
                        std::span<const std::string> vertex_ids = {});

NeighborSets out_neighbor_sets(const SensorGraph& g);
SensorGraph transpose_graph(const SensorGraph& g);

/// Outgoing and incoming neighbour sets, computed once per graph.
struct DirectedSupports {
  NeighborSets out;
  NeighborSets in;

  static DirectedSupports of(const SensorGraph& g);
};

/// Reads a `from,to,dist` file.
std::vector<DistanceRecord> load_distances(const std::string& path);
void write_distances(const std::string& path, std::span<const DistanceRecord> records);

}  // namespace garnn
