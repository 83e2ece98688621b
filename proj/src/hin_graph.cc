#include "rgtbot/hin_graph.h"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "rgtbot/text.h"

namespace rgtbot {

namespace fs = std::filesystem;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: break;
  }
  return "none";
}

Split parse_split(std::string_view s) {
  s = text::trim(s);
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  if (s == "none") return Split::none;
  throw std::invalid_argument("unknown split '" + std::string(s) + "'");
}

GraphFormatError::GraphFormatError(const std::string& file, std::size_t line, const std::string& msg)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg), line_(line) {}

std::size_t HinGraph::num_edges() const {
  std::size_t n = 0;
  for (const auto& e : edges) n += e.size();
  return n;
}

void HinGraph::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("HinGraph: " + m); };
  if (edges.size() != relations.size()) fail("edge list count does not match relation count");
  std::set<std::string> names;
  for (std::size_t r = 0; r < relations.size(); ++r) {
    if (relations[r].index != r) fail("relation indices must be dense and ordered");
    if (relations[r].name.empty()) fail("empty relation name");
    if (!names.insert(relations[r].name).second) fail("duplicate relation name '" + relations[r].name + "'");
    for (const Edge& e : edges[r]) {
      if (e.src >= num_nodes || e.dst >= num_nodes) {
        fail("edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) + ") under relation '" +
             relations[r].name + "' references a node outside 0.." + std::to_string(num_nodes));
      }
    }
  }
  if (features.rows() != num_nodes) fail("feature row count does not match num_nodes");
  if (!all_finite(features)) fail("non-finite feature value");
  if (labels.size() != num_nodes || splits.size() != num_nodes) fail("labels/splits length mismatch");
  for (std::size_t i = 0; i < num_nodes; ++i) {
    const int y = labels[i];
    if (y != kBot && y != kHuman && y != kUnlabeled) fail("node " + std::to_string(i) + " has invalid label");
    const bool labeled = y != kUnlabeled;
    if (labeled != (splits[i] != Split::none)) {
      fail("node " + std::to_string(i) +
           (labeled ? " is labeled but in no mask" : " is unlabeled but assigned to a mask"));
    }
  }
}

void HinGraph::canonicalize() {
  for (auto& list : edges) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

std::vector<bool> HinGraph::mask(Split s) const {
  std::vector<bool> m(num_nodes);
  for (std::size_t i = 0; i < num_nodes; ++i) m[i] = splits[i] == s;
  return m;
}

std::vector<std::size_t> HinGraph::nodes_in(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

std::size_t HinGraph::relation_index(std::string_view name) const {
  for (const auto& r : relations) {
    if (r.name == name) return r.index;
  }
  throw std::invalid_argument("unknown relation '" + std::string(name) + "'");
}

std::vector<std::string> HinGraph::relation_names() const {
  std::vector<std::string> out;
  for (const auto& r : relations) out.push_back(r.name);
  return out;
}

HinGraph HinGraph::with_relations(std::span<const std::string> names) const {
  HinGraph g;
  g.num_nodes = num_nodes;
  g.features = features;
  g.labels = labels;
  g.splits = splits;
  for (const auto& name : names) {
    const std::size_t src = relation_index(name);
    g.relations.push_back({g.relations.size(), name});
    g.edges.push_back(edges[src]);
  }
  g.validate();
  return g;
}

NeighborIndex::NeighborIndex(const HinGraph& g) : num_nodes_(g.num_nodes) {
  per_relation_.reserve(g.edges.size());
  for (const auto& list : g.edges) {
    Csr csr;
    csr.offsets.assign(num_nodes_ + 1, 0);
    for (const Edge& e : list) {
      if (e.dst >= num_nodes_ || e.src >= num_nodes_) {
        throw std::invalid_argument("build_index: edge endpoint out of range");
      }
      csr.offsets[e.dst + 1] += 1;
    }
    std::partial_sum(csr.offsets.begin(), csr.offsets.end(), csr.offsets.begin());
    csr.sources.resize(list.size());
    std::vector<std::size_t> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
    for (const Edge& e : list) csr.sources[cursor[e.dst]++] = e.src;
    // Deterministic summation order downstream depends on ascending sources.
    for (std::size_t i = 0; i < num_nodes_; ++i) {
      auto b = csr.sources.begin() + static_cast<std::ptrdiff_t>(csr.offsets[i]);
      auto e = csr.sources.begin() + static_cast<std::ptrdiff_t>(csr.offsets[i + 1]);
      std::sort(b, e);
    }
    per_relation_.push_back(std::move(csr));
  }
}

std::span<const std::uint32_t> NeighborIndex::neighbors(std::size_t r, std::size_t i) const {
  const Csr& c = per_relation_.at(r);
  return {c.sources.data() + c.offsets[i], c.offsets[i + 1] - c.offsets[i]};
}

std::size_t NeighborIndex::degree(std::size_t r, std::size_t i) const {
  const Csr& c = per_relation_.at(r);
  return c.offsets[i + 1] - c.offsets[i];
}

std::vector<Edge> NeighborIndex::flatten(std::size_t r) const {
  std::vector<Edge> out;
  out.reserve(num_edges(r));
  for (std::size_t i = 0; i < num_nodes_; ++i) {
    for (auto j : neighbors(r, i)) out.push_back({j, static_cast<std::uint32_t>(i)});
  }
  std::sort(out.begin(), out.end());
  return out;
}

NeighborIndex build_index(const HinGraph& g) { return NeighborIndex(g); }

std::vector<DegreeStats> degree_stats(const HinGraph& g) {
  std::vector<DegreeStats> out;
  for (std::size_t r = 0; r < g.num_relations(); ++r) {
    DegreeStats s;
    s.relation = g.relations[r].name;
    s.num_edges = g.edges[r].size();
    std::vector<std::size_t> indeg(g.num_nodes, 0), outdeg(g.num_nodes, 0);
    for (const Edge& e : g.edges[r]) {
      indeg[e.dst] += 1;
      outdeg[e.src] += 1;
    }
    s.max_in_degree = g.num_nodes ? *std::max_element(indeg.begin(), indeg.end()) : 0;
    s.max_out_degree = g.num_nodes ? *std::max_element(outdeg.begin(), outdeg.end()) : 0;
    s.in_histogram.assign(s.max_in_degree + 1, 0);
    s.out_histogram.assign(s.max_out_degree + 1, 0);
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      s.in_histogram[indeg[i]] += 1;
      s.out_histogram[outdeg[i]] += 1;
      if (indeg[i] == 0) s.isolated_targets += 1;
    }
    s.mean_degree = g.num_nodes ? static_cast<double>(s.num_edges) / static_cast<double>(g.num_nodes) : 0.0;
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

struct LineReader {
  std::ifstream in;
  std::string file;
  std::size_t line_no = 0;
  std::string line;

  explicit LineReader(const fs::path& p) : in(p), file(p.string()) {
    if (!in) throw std::runtime_error("cannot open '" + file + "'");
  }
  bool next() {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!text::trim(line).empty()) return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& msg) const { throw GraphFormatError(file, line_no, msg); }
};

std::uint32_t parse_id(const LineReader& rd, std::string_view field, const char* what) {
  const auto v = text::parse_int(field);
  if (!v || *v < 0 || *v > static_cast<std::int64_t>(UINT32_MAX)) {
    rd.fail(std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return static_cast<std::uint32_t>(*v);
}

}  // namespace

HinGraph load_graph(const fs::path& nodes_path,
                    const std::vector<std::pair<std::string, fs::path>>& edge_paths) {
  HinGraph g;
  LineReader rd(nodes_path);
  if (!rd.next()) rd.fail("missing header");
  const auto header = text::split(rd.line, ',');
  if (header.size() < 3 || text::trim(header[0]) != "id" || text::trim(header[1]) != "label" ||
      text::trim(header[2]) != "split") {
    rd.fail("header must start with id,label,split");
  }
  const std::size_t fdim = header.size() - 3;
  for (std::size_t f = 0; f < fdim; ++f) {
    if (text::trim(header[3 + f]) != "f" + std::to_string(f)) rd.fail("feature columns must be f0..f{F-1}");
  }

  struct Row {
    int label;
    Split split;
    std::vector<double> x;
    std::size_t line;
  };
  std::vector<std::pair<std::uint32_t, Row>> rows;
  while (rd.next()) {
    const auto cells = text::split(rd.line, ',');
    if (cells.size() != header.size()) {
      rd.fail("expected " + std::to_string(header.size()) + " fields, found " + std::to_string(cells.size()));
    }
    const std::uint32_t id = parse_id(rd, cells[0], "node id");
    const auto label = text::parse_int(cells[1]);
    if (!label || (*label != kBot && *label != kHuman && *label != kUnlabeled)) {
      rd.fail("label must be 0, 1 or -1");
    }
    Split split;
    try {
      split = parse_split(cells[2]);
    } catch (const std::invalid_argument& e) {
      rd.fail(e.what());
    }
    if ((*label != kUnlabeled) != (split != Split::none)) {
      rd.fail(*label == kUnlabeled ? "unlabeled node assigned to split '" + std::string(to_string(split)) + "'"
                                   : "labeled node must belong to train, val or test");
    }
    Row row{static_cast<int>(*label), split, {}, rd.line_no};
    row.x.reserve(fdim);
    for (std::size_t f = 0; f < fdim; ++f) {
      const auto v = text::parse_double(cells[3 + f]);
      if (!v) rd.fail("non-numeric feature f" + std::to_string(f) + " '" + std::string(cells[3 + f]) + "'");
      row.x.push_back(*v);
    }
    rows.emplace_back(id, std::move(row));
  }

  g.num_nodes = rows.size();
  g.features = Matrix(g.num_nodes, fdim);
  g.labels.assign(g.num_nodes, kUnlabeled);
  g.splits.assign(g.num_nodes, Split::none);
  std::vector<std::size_t> seen_at(g.num_nodes, 0);
  for (const auto& [id, row] : rows) {
    if (id >= g.num_nodes) {
      throw GraphFormatError(rd.file, row.line,
                             "node id " + std::to_string(id) + " outside 0.." + std::to_string(g.num_nodes - 1));
    }
    if (seen_at[id]) {
      const bool overlap = g.splits[id] != row.split;
      throw GraphFormatError(rd.file, row.line,
                             overlap ? "node " + std::to_string(id) + " appears in masks '" +
                                           std::string(to_string(g.splits[id])) + "' and '" +
                                           std::string(to_string(row.split)) + "' (overlapping masks)"
                                     : "duplicate node id " + std::to_string(id) + " (first on line " +
                                           std::to_string(seen_at[id]) + ")");
    }
    seen_at[id] = row.line;
    g.labels[id] = row.label;
    g.splits[id] = row.split;
    std::copy(row.x.begin(), row.x.end(), g.features.row(id).begin());
  }

  for (const auto& [name, path] : edge_paths) {
    const std::size_t r = g.relations.size();
    for (const auto& existing : g.relations) {
      if (existing.name == name) throw std::invalid_argument("duplicate relation '" + name + "'");
    }
    g.relations.push_back({r, name});
    g.edges.emplace_back();
    LineReader er(path);
    if (!er.next()) er.fail("missing header");
    const auto eh = text::split(er.line, ',');
    if (eh.size() != 2 || text::trim(eh[0]) != "src" || text::trim(eh[1]) != "dst") er.fail("header must be src,dst");
    while (er.next()) {
      const auto cells = text::split(er.line, ',');
      if (cells.size() != 2) er.fail("expected 2 fields");
      const auto src = parse_id(er, cells[0], "src id");
      const auto dst = parse_id(er, cells[1], "dst id");
      for (auto id : {src, dst}) {
        if (id >= g.num_nodes) er.fail("unknown node id " + std::to_string(id));
      }
      g.edges[r].push_back({src, dst});
    }
  }
  g.canonicalize();
  g.validate();
  return g;
}

void save_graph(const HinGraph& g, const fs::path& dir) {
  g.validate();
  fs::create_directories(dir);
  auto open = [](const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    return out;
  };
  {
    auto out = open(dir / "nodes.csv");
    out << "id,label,split";
    for (std::size_t f = 0; f < g.feature_dim(); ++f) out << ",f" << f;
    out << '\n';
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      out << i << ',' << g.labels[i] << ',' << to_string(g.splits[i]);
      for (double v : g.features.row(i)) out << ',' << text::format_double(v);
      out << '\n';
    }
  }
  {
    auto out = open(dir / "relations.txt");
    for (const auto& r : g.relations) out << r.name << '\n';
  }
  for (std::size_t r = 0; r < g.num_relations(); ++r) {
    auto out = open(dir / ("edges_" + g.relations[r].name + ".csv"));
    out << "src,dst\n";
    for (const Edge& e : g.edges[r]) out << e.src << ',' << e.dst << '\n';
  }
}

HinGraph load_graph_dir(const fs::path& dir) {
  std::ifstream in(dir / "relations.txt");
  if (!in) throw std::runtime_error("cannot open '" + (dir / "relations.txt").string() + "'");
  std::vector<std::pair<std::string, fs::path>> edge_paths;
  std::string line;
  while (std::getline(in, line)) {
    const auto name = std::string(text::trim(line));
    if (name.empty()) continue;
    edge_paths.emplace_back(name, dir / ("edges_" + name + ".csv"));
  }
  return load_graph(dir / "nodes.csv", edge_paths);
}

}  // namespace rgtbot
