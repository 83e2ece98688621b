#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgtbot/matrix.h"

namespace rgtbot {

enum class Split : std::uint8_t { none, train, val, test };

inline constexpr int kHuman = 0;
inline constexpr int kBot = 1;
inline constexpr int kUnlabeled = -1;

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct RelationId {
  std::size_t index = 0;
  std::string name;
  bool operator==(const RelationId&) const = default;
};

struct Edge {
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  auto operator<=>(const Edge&) const = default;
};

// Raised by the CSV readers; carries the file and 1-based line number.
class GraphFormatError : public std::runtime_error {
 public:
  GraphFormatError(const std::string& file, std::size_t line, const std::string& msg);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Users as nodes, one directed edge list per relation. Messages flow from
// edge source to edge target.
struct HinGraph {
  std::size_t num_nodes = 0;
  std::vector<RelationId> relations;
  std::vector<std::vector<Edge>> edges;  // per relation, sorted by (src, dst), unique
  Matrix features;                       // num_nodes × F
  std::vector<int> labels;               // kBot, kHuman or kUnlabeled
  std::vector<Split> splits;

  std::size_t num_relations() const { return relations.size(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t num_edges() const;

  // Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
  // Sorts and deduplicates every edge list.
  void canonicalize();

  std::vector<bool> mask(Split s) const;
  std::vector<std::size_t> nodes_in(Split s) const;
  std::size_t relation_index(std::string_view name) const;
  std::vector<std::string> relation_names() const;

  // Copy restricted to the named relations, in the given order.
  HinGraph with_relations(std::span<const std::string> names) const;

  bool operator==(const HinGraph&) const = default;
};

// Compressed in-neighbor lists: neighbors(r, i) are the sources j of edges j→i
// under relation r, ascending.
class NeighborIndex {
 public:
  struct Csr {
    std::vector<std::size_t> offsets;  // num_nodes + 1
    std::vector<std::uint32_t> sources;
  };

  NeighborIndex() = default;
  explicit NeighborIndex(const HinGraph& g);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_relations() const { return per_relation_.size(); }
  const Csr& relation(std::size_t r) const { return per_relation_.at(r); }
  std::span<const std::uint32_t> neighbors(std::size_t r, std::size_t i) const;
  std::size_t degree(std::size_t r, std::size_t i) const;
  std::size_t num_edges(std::size_t r) const { return per_relation_.at(r).sources.size(); }

  // Edge list (src, dst) reconstructed from the index, sorted by (src, dst).
  std::vector<Edge> flatten(std::size_t r) const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Csr> per_relation_;
};

NeighborIndex build_index(const HinGraph& g);

struct DegreeStats {
  std::string relation;
  std::size_t num_edges = 0;
  double mean_degree = 0.0;
  std::size_t max_in_degree = 0;
  std::size_t max_out_degree = 0;
  std::size_t isolated_targets = 0;         // nodes with empty N^r(i)
  std::vector<std::size_t> in_histogram;    // in_histogram[k] = #nodes with in-degree k
  std::vector<std::size_t> out_histogram;
};

std::vector<DegreeStats> degree_stats(const HinGraph& g);

// CSV formats:
//   nodes: header `id,label,split,f0,...,f{F-1}`
//   edges: header `src,dst`
HinGraph load_graph(const std::filesystem::path& nodes_path,
                    const std::vector<std::pair<std::string, std::filesystem::path>>& edge_paths);

// Directory layout written by save_graph: nodes.csv, relations.txt (one
// relation name per line, in index order) and edges_<name>.csv.
void save_graph(const HinGraph& g, const std::filesystem::path& dir);
HinGraph load_graph_dir(const std::filesystem::path& dir);

}  // namespace rgtbot
