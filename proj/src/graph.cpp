#include "garnn/graph.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "text_util.hpp"

namespace garnn {

SensorGraph::SensorGraph(std::vector<std::string> vertex_ids, std::vector<std::uint8_t> adjacency)
    : ids_(std::move(vertex_ids)), adjacency_(std::move(adjacency)) {
  if (adjacency_.size() != ids_.size() * ids_.size())
    throw DimensionError("SensorGraph: adjacency size " + std::to_string(adjacency_.size()) + " for " +
                         std::to_string(ids_.size()) + " vertices");
}

std::size_t SensorGraph::edge_count() const {
  std::size_t n = 0;
  for (auto e : adjacency_) n += e ? 1 : 0;
  return n;
}

std::optional<std::size_t> SensorGraph::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == id) return i;
  return std::nullopt;
}

SensorGraph build_graph(std::span<const DistanceRecord> records, double threshold,
                        std::span<const std::string> vertex_ids) {
  std::vector<std::string> ids(vertex_ids.begin(), vertex_ids.end());
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!index.emplace(ids[i], i).second) throw IngestionError("duplicate vertex id '" + ids[i] + "'");
  }
  const bool fixed = !vertex_ids.empty();
  auto lookup = [&](const std::string& id) -> std::size_t {
    auto it = index.find(id);
    if (it != index.end()) return it->second;
    if (fixed) throw IngestionError("distance record names unknown sensor id '" + id + "'");
    ids.push_back(id);
    index.emplace(id, ids.size() - 1);
    return ids.size() - 1;
  };

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(records.size());
  for (const auto& r : records) {
    if (!(r.distance >= 0.0))
      throw IngestionError("negative or invalid distance for " + r.from + " -> " + r.to);
    const std::size_t a = lookup(r.from);
    const std::size_t b = lookup(r.to);
    pairs.emplace_back(a, b);
  }

  const std::size_t n = ids.size();
  std::vector<std::uint8_t> adjacency(n * n, 0);
  std::vector<double> distances(n * n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto [a, b] = pairs[k];
    distances[a * n + b] = records[k].distance;
    if (records[k].distance < threshold) adjacency[a * n + b] = 1;
  }
  SensorGraph g(std::move(ids), std::move(adjacency));
  g.set_distances(std::move(distances));
  return g;
}

NeighborSets out_neighbor_sets(const SensorGraph& g) {
  NeighborSets nb;
  const std::size_t n = g.size();
  nb.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j == i || g.edge(i, j)) nb.rows[i].push_back(static_cast<std::uint32_t>(j));
  return nb;
}

SensorGraph transpose_graph(const SensorGraph& g) {
  const std::size_t n = g.size();
  std::vector<std::uint8_t> adjacency(n * n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) adjacency[j * n + i] = g.edge(i, j) ? 1 : 0;
  SensorGraph t(g.vertex_ids(), std::move(adjacency));
  if (!g.distances().empty()) {
    std::vector<double> d(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) d[j * n + i] = g.distances()[i * n + j];
    t.set_distances(std::move(d));
  }
  return t;
}

DirectedSupports DirectedSupports::of(const SensorGraph& g) {
  return {out_neighbor_sets(g), out_neighbor_sets(transpose_graph(g))};
}

std::vector<DistanceRecord> load_distances(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open distance file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(path + ": empty distance file");
  const auto header = detail::split_csv(detail::trim(line));
  if (header.size() != 3 || header[0] != "from" || header[1] != "to" || header[2] != "dist")
    throw IngestionError(path + ":1: expected header 'from,to,dist'");
  std::vector<DistanceRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != 3)
      throw IngestionError(path + ":" + std::to_string(line_no) + ": expected 3 fields, got " +
                           std::to_string(fields.size()));
    const auto d = detail::parse_double(fields[2]);
    if (!d) throw IngestionError(path + ":" + std::to_string(line_no) + ": bad distance '" + fields[2] + "'");
    records.push_back({fields[0], fields[1], *d});
  }
  return records;
}

void write_distances(const std::string& path, std::span<const DistanceRecord> records) {
  std::ostringstream out;
  out << "from,to,dist\n";
  for (const auto& r : records) out << r.from << ',' << r.to << ',' << detail::format_double(r.distance) << '\n';
  detail::write_file_atomic(path, out.str());
}

}  // namespace garnn
