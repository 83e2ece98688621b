#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rgtbot/bot_model.h"
#include "rgtbot/text.h"

namespace rgtbot {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kMagic = "rgtbot-checkpoint 1";

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

void write_values(std::ostream& out, const Matrix& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (i) out << ' ';
    out << text::format_hex(m[i]);
  }
  out << '\n';
}

Matrix read_values(std::istream& in, std::size_t rows, std::size_t cols, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
  Matrix m(rows, cols);
  std::istringstream ls(line);
  std::string tok;
  std::size_t i = 0;
  while (ls >> tok) {
    const auto v = text::parse_double(tok);
    if (!v || i >= m.size()) throw std::runtime_error("checkpoint: bad values for tensor '" + name + "'");
    m[i++] = *v;
  }
  if (i != m.size()) throw std::runtime_error("checkpoint: tensor '" + name + "' has too few values");
  return m;
}

}  // namespace

void save_checkpoint(const BotModel& model, const fs::path& path) {
  const auto& c = model.config();
  auto out = open_out(path);
  out << kMagic << '\n';
  out << "input_dim " << c.input_dim << '\n';
  out << "hidden " << c.hidden << '\n';
  out << "layers " << c.layers << '\n';
  out << "transformer_heads " << c.rgt_heads << '\n';
  out << "semantic_heads " << c.semantic_heads << '\n';
  out << "semantic_hidden " << c.semantic_hidden << '\n';
  out << "dropout " << text::format_hex(c.dropout) << '\n';
  out << "relations " << text::join(c.relations, ",") << '\n';
  out << "fusion_mode " << to_string(c.fusion_mode) << '\n';
  out << "aggregator_mode " << to_string(c.aggregator_mode) << '\n';
  const auto params = model.parameters();
  out << "tensors " << params.size() << '\n';
  for (const auto* p : params) {
    out << "tensor " << p->name << ' ' << p->rows() << ' ' << p->cols() << ' ' << p->step_count << '\n';
    write_values(out, p->value);
    write_values(out, p->moment1);
    write_values(out, p->moment2);
  }
  out << "end\n";
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path.string() + "'");
}

BotModel load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) {
    throw std::runtime_error("'" + path.string() + "' is not an rgtbot checkpoint");
  }
  ModelConfig cfg;
  std::size_t count = 0;
  auto as_size = [&](std::string_view key, std::string_view v) {
    const auto n = text::parse_int(v);
    if (!n || *n < 0) throw std::runtime_error("checkpoint: bad value for " + std::string(key));
    return static_cast<std::size_t>(*n);
  };
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string value = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (key == "input_dim") cfg.input_dim = as_size(key, value);
    else if (key == "hidden") cfg.hidden = as_size(key, value);
    else if (key == "layers") cfg.layers = as_size(key, value);
    else if (key == "transformer_heads") cfg.rgt_heads = as_size(key, value);
    else if (key == "semantic_heads") cfg.semantic_heads = as_size(key, value);
    else if (key == "semantic_hidden") cfg.semantic_hidden = as_size(key, value);
    else if (key == "dropout") {
      const auto v = text::parse_double(value);
      if (!v) throw std::runtime_error("checkpoint: bad dropout");
      cfg.dropout = *v;
    } else if (key == "relations") {
      cfg.relations.clear();
      for (auto name : text::split(value, ',')) cfg.relations.emplace_back(text::trim(name));
    } else if (key == "fusion_mode") cfg.fusion_mode = parse_fusion_mode(value);
    else if (key == "aggregator_mode") cfg.aggregator_mode = parse_aggregator_mode(value);
    else if (key == "tensors") {
      count = as_size(key, value);
      break;
    } else {
      throw std::runtime_error("checkpoint: unknown header key '" + key + "'");
    }
  }
  BotModel model(cfg, 0);
  auto params = model.parameters();
  if (count != params.size()) {
    throw std::runtime_error("checkpoint: " + std::to_string(count) + " tensors but config implies " +
                             std::to_string(params.size()));
  }
  for (auto* p : params) {
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: truncated");
    std::istringstream hs(line);
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    long steps = 0;
    if (!(hs >> tag >> name >> rows >> cols >> steps) || tag != "tensor") {
      throw std::runtime_error("checkpoint: malformed tensor header '" + line + "'");
    }
    if (name != p->name || rows != p->rows() || cols != p->cols()) {
      throw std::runtime_error("checkpoint: expected tensor " + p->name + " " + std::to_string(p->rows()) + "x" +
                               std::to_string(p->cols()) + ", found " + name + " " + std::to_string(rows) + "x" +
                               std::to_string(cols));
    }
    p->value = read_values(in, rows, cols, name);
    p->moment1 = read_values(in, rows, cols, name);
    p->moment2 = read_values(in, rows, cols, name);
    p->step_count = steps;
  }
  if (!std::getline(in, line) || line != "end") throw std::runtime_error("checkpoint: missing end marker");
  return model;
}

void export_embeddings(const BotModel& model, const HinGraph& g, const fs::path& path) {
  const NeighborIndex index(g);
  const auto fwd = forward(model, g, index);
  const Matrix& e = fwd.cache.embeddings;
  auto out = open_out(path);
  out << "id,label";
  for (std::size_t k = 0; k < e.cols(); ++k) out << ",e" << k;
  out << '\n';
  for (std::size_t i = 0; i < e.rows(); ++i) {
    out << i << ',' << g.labels[i];
    for (double v : e.row(i)) out << ',' << text::format_double(v);
    out << '\n';
  }
}

void export_attention(const BotModel& model, const HinGraph& g, const fs::path& path) {
  const NeighborIndex index(g);
  const auto fwd = forward(model, g, index);
  auto out = open_out(path);
  out << "kind,layer,relation,head,src,dst,weight\n";
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& fc = fwd.cache.fusion[l];
    if (fc.mode == FusionMode::semantic_attention) {
      for (std::size_t d = 0; d < fc.beta.rows(); ++d) {
        for (std::size_t r = 0; r < fc.beta.cols(); ++r) {
          out << "beta," << l << ',' << g.relations[r].name << ',' << d << ",-1,-1,"
              << text::format_double(fc.beta(d, r)) << '\n';
        }
      }
    }
    const auto& rc = fwd.cache.rgt[l];
    for (std::size_t r = 0; r < rc.relations.size(); ++r) {
      const Matrix& alpha = rc.relations[r].alpha;
      const auto& csr = index.relation(r);
      for (std::size_t c = 0; c < alpha.cols(); ++c) {
        for (std::size_t i = 0; i < g.num_nodes; ++i) {
          for (std::size_t t = csr.offsets[i]; t < csr.offsets[i + 1]; ++t) {
            out << "alpha," << l << ',' << g.relations[r].name << ',' << c << ',' << csr.sources[t] << ',' << i
                << ',' << text::format_double(alpha(t, c)) << '\n';
          }
        }
      }
    }
  }
}

std::vector<AttentionRow> read_attention_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "kind,layer,relation,head,src,dst,weight") {
    throw std::runtime_error("'" + path.string() + "': unexpected attention header");
  }
  std::vector<AttentionRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = text::split(line, ',');
    const auto layer = cells.size() == 7 ? text::parse_int(cells[1]) : std::nullopt;
    const auto head = cells.size() == 7 ? text::parse_int(cells[3]) : std::nullopt;
    const auto src = cells.size() == 7 ? text::parse_int(cells[4]) : std::nullopt;
    const auto dst = cells.size() == 7 ? text::parse_int(cells[5]) : std::nullopt;
    const auto w = cells.size() == 7 ? text::parse_double(cells[6]) : std::nullopt;
    if (!layer || !head || !src || !dst || !w || (cells[0] != "alpha" && cells[0] != "beta")) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed attention row");
    }
    rows.push_back({std::string(cells[0]), static_cast<std::size_t>(*layer), std::string(cells[2]),
                    static_cast<std::size_t>(*head), static_cast<long>(*src), static_cast<long>(*dst), *w});
  }
  return rows;
}

}  // namespace rgtbot
