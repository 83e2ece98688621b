#include "rgtbot/synth_gen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "rgtbot/rng.h"
#include "rgtbot/text.h"

namespace rgtbot {

namespace {

constexpr std::uint64_t kLabelStream = 11;
constexpr std::uint64_t kFeatureStream = 12;
constexpr std::uint64_t kSplitStream = 13;
constexpr std::uint64_t kEdgeStreamBase = 100;

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

// Appends edges src→group[k] for each k kept with probability p, skipping
// self pairs. Uses geometric gaps so the cost is O(kept edges).
void sample_block(std::uint32_t src, const std::vector<std::uint32_t>& group, double p, Rng& rng,
                  std::vector<Edge>& out) {
  if (p <= 0.0 || group.empty()) return;
  if (p >= 1.0) {
    for (auto dst : group) {
      if (dst != src) out.push_back({src, dst});
    }
    return;
  }
  const double log_q = std::log1p(-p);
  std::size_t pos = 0;
  while (true) {
    const double u = 1.0 - rng.uniform();  // (0, 1]
    const double gap = std::floor(std::log(u) / log_q);
    if (gap >= static_cast<double>(group.size() - pos)) return;
    pos += static_cast<std::size_t>(gap);
    if (group[pos] != src) out.push_back({src, group[pos]});
    ++pos;
    if (pos >= group.size()) return;
  }
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

// MI from a joint table P(Y=y, M=m), y ∈ {human, bot}, m ∈ {human, bot, tie}.
double mutual_information(const std::array<std::array<double, 3>, 2>& joint) {
  std::array<double, 2> py{};
  std::array<double, 3> pm{};
  std::vector<double> flat;
  for (int y = 0; y < 2; ++y) {
    for (int m = 0; m < 3; ++m) {
      py[y] += joint[y][m];
      pm[m] += joint[y][m];
      flat.push_back(joint[y][m]);
    }
  }
  return entropy(py) + entropy(pm) - entropy(flat);
}

}  // namespace

void SynthSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("synth spec: " + m); };
  if (num_nodes < 2) fail("num_nodes must be at least 2");
  if (!(bot_fraction > 0.0 && bot_fraction < 1.0)) fail("bot_fraction must be in (0, 1)");
  if (feature_dim == 0) fail("feature_dim must be positive");
  if (!(feature_informativeness >= 0.0) || !std::isfinite(feature_informativeness)) {
    fail("feature_informativeness must be finite and >= 0");
  }
  for (double s : {train_split, val_split, test_split}) {
    if (!is_prob(s)) fail("split fractions must be in [0, 1]");
  }
  if (std::abs(train_split + val_split + test_split - 1.0) > 1e-9) fail("split fractions must sum to 1");
  if (relations.empty()) fail("at least one relation is required");
  std::set<std::string> names;
  for (const auto& r : relations) {
    if (r.name.empty() || r.name.find_first_of(", \t/\\") != std::string::npos) {
      fail("relation name '" + r.name + "' must be non-empty without commas, spaces or slashes");
    }
    if (!names.insert(r.name).second) fail("duplicate relation '" + r.name + "'");
    if (!is_prob(r.p_intra) || !is_prob(r.p_inter)) fail("relation '" + r.name + "': probabilities must be in [0, 1]");
    if (!(r.mean_degree >= 0.0) || !std::isfinite(r.mean_degree)) fail("relation '" + r.name + "': bad mean_degree");
  }
}

std::size_t bot_count(const SynthSpec& spec) {
  const auto n = static_cast<std::size_t>(std::llround(spec.bot_fraction * static_cast<double>(spec.num_nodes)));
  return std::clamp<std::size_t>(n, 1, spec.num_nodes - 1);
}

EdgeProbabilities scaled_edge_probabilities(const RelationSpec& rel, std::size_t num_bots, std::size_t num_humans) {
  const auto nb = static_cast<double>(num_bots);
  const auto nh = static_cast<double>(num_humans);
  const double same_pairs = nb * (nb - 1.0) + nh * (nh - 1.0);
  const double cross_pairs = 2.0 * nb * nh;
  const double target = rel.mean_degree * (nb + nh);
  if (target == 0.0) return {};
  const double weight = rel.p_intra * same_pairs + rel.p_inter * cross_pairs;
  if (weight <= 0.0) {
    throw std::invalid_argument("relation '" + rel.name + "': mean_degree > 0 needs p_intra or p_inter > 0");
  }
  const double s = target / weight;
  EdgeProbabilities p{s * rel.p_intra, s * rel.p_inter};
  if (p.same > 1.0 + 1e-12 || p.cross > 1.0 + 1e-12) {
    throw std::invalid_argument("relation '" + rel.name + "': mean_degree " + text::format_double(rel.mean_degree) +
                                " is infeasible (needs edge probability above 1)");
  }
  p.same = std::min(p.same, 1.0);
  p.cross = std::min(p.cross, 1.0);
  return p;
}

HinGraph generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.num_nodes;
  const Rng base(spec.seed);

  HinGraph g;
  g.num_nodes = n;
  g.labels.assign(n, kHuman);
  {
    Rng rng = base.fork(kLabelStream);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    const std::size_t bots = bot_count(spec);
    for (std::size_t k = 0; k < bots; ++k) g.labels[order[k]] = kBot;
  }

  g.features = Matrix(n, spec.feature_dim);
  {
    Rng rng = base.fork(kFeatureStream);
    const double mu = spec.feature_informativeness;
    for (std::size_t i = 0; i < n; ++i) {
      const double mean = g.labels[i] == kBot ? mu : -mu;
      for (double& v : g.features.row(i)) v = mean + rng.normal();
    }
  }

  g.splits.assign(n, Split::test);
  {
    Rng rng = base.fork(kSplitStream);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_train = static_cast<std::size_t>(std::llround(spec.train_split * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train,
                                static_cast<std::size_t>(std::llround(spec.val_split * static_cast<double>(n))));
    for (std::size_t k = 0; k < n; ++k) {
      g.splits[order[k]] = k < n_train ? Split::train : (k < n_train + n_val ? Split::val : Split::test);
    }
  }

  std::array<std::vector<std::uint32_t>, 2> members;
  for (std::size_t i = 0; i < n; ++i) members[g.labels[i]].push_back(static_cast<std::uint32_t>(i));

  for (std::size_t r = 0; r < spec.relations.size(); ++r) {
    const auto& rel = spec.relations[r];
    const auto probs = scaled_edge_probabilities(rel, members[kBot].size(), members[kHuman].size());
    Rng rng = base.fork(kEdgeStreamBase + r);
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
      const int y = g.labels[i];
      const auto src = static_cast<std::uint32_t>(i);
      sample_block(src, members[y], probs.same, rng, edges);
      sample_block(src, members[1 - y], probs.cross, rng, edges);
    }
    g.relations.push_back({r, rel.name});
    g.edges.push_back(std::move(edges));
  }
  g.canonicalize();
  g.validate();
  return g;
}

std::vector<std::string> fixture_names() {
  return {"separable-structure", "separable-features", "hetero-two-relations"};
}

SynthSpec fixture(std::string_view name, std::size_t num_nodes) {
  SynthSpec s;
  s.num_nodes = num_nodes;
  s.bot_fraction = 0.5;
  s.feature_dim = 16;
  s.seed = 20220101;
  if (name == "separable-structure") {
    s.feature_informativeness = 0.0;
    s.relations = {{"follower", 0.9, 0.1, 10.0}, {"following", 0.5, 0.5, 10.0}};
  } else if (name == "separable-features") {
    s.feature_informativeness = 2.0;
    s.relations = {{"follower", 0.5, 0.5, 10.0}, {"following", 0.5, 0.5, 10.0}};
  } else if (name == "hetero-two-relations") {
    s.feature_informativeness = 0.25;
    s.relations = {{"follower", 0.95, 0.05, 10.0}, {"following", 0.8, 0.2, 10.0}};
  } else {
    throw std::invalid_argument("unknown fixture '" + std::string(name) + "'");
  }
  return s;
}

std::string to_text(const SynthSpec& spec) {
  std::ostringstream out;
  out << "num_nodes = " << spec.num_nodes << '\n'
      << "bot_fraction = " << text::format_double(spec.bot_fraction) << '\n'
      << "feature_dim = " << spec.feature_dim << '\n'
      << "feature_informativeness = " << text::format_double(spec.feature_informativeness) << '\n'
      << "train_split = " << text::format_double(spec.train_split) << '\n'
      << "val_split = " << text::format_double(spec.val_split) << '\n'
      << "test_split = " << text::format_double(spec.test_split) << '\n'
      << "seed = " << spec.seed << '\n';
  for (const auto& r : spec.relations) {
    out << "relation = " << r.name << ' ' << text::format_double(r.p_intra) << ' ' << text::format_double(r.p_inter)
        << ' ' << text::format_double(r.mean_degree) << '\n';
  }
  return out.str();
}

SynthSpec parse_synth_spec(std::string_view content) {
  SynthSpec s;
  s.relations.clear();
  for (const auto& kv : text::parse_key_values(content)) {
    auto bad = [&](const std::string& why) {
      return std::invalid_argument("synth spec line " + std::to_string(kv.line) + ": " + why);
    };
    auto real = [&] {
      const auto v = text::parse_double(kv.value);
      if (!v) throw bad("'" + kv.key + "' needs a number");
      return *v;
    };
    auto count = [&] {
      const auto v = text::parse_int(kv.value);
      if (!v || *v < 0) throw bad("'" + kv.key + "' needs a non-negative integer");
      return static_cast<std::size_t>(*v);
    };
    if (kv.key == "num_nodes") s.num_nodes = count();
    else if (kv.key == "bot_fraction") s.bot_fraction = real();
    else if (kv.key == "feature_dim") s.feature_dim = count();
    else if (kv.key == "feature_informativeness") s.feature_informativeness = real();
    else if (kv.key == "train_split") s.train_split = real();
    else if (kv.key == "val_split") s.val_split = real();
    else if (kv.key == "test_split") s.test_split = real();
    else if (kv.key == "seed") s.seed = static_cast<std::uint64_t>(count());
    else if (kv.key == "relation") {
      std::istringstream in(kv.value);
      RelationSpec r;
      std::string a, b, c, extra;
      if (!(in >> r.name >> a >> b >> c) || (in >> extra)) {
        throw bad("relation needs: name p_intra p_inter mean_degree");
      }
      const auto pa = text::parse_double(a), pb = text::parse_double(b), pc = text::parse_double(c);
      if (!pa || !pb || !pc) throw bad("relation '" + r.name + "': values must be numbers");
      r.p_intra = *pa;
      r.p_inter = *pb;
      r.mean_degree = *pc;
      s.relations.push_back(r);
    } else {
      throw bad("unknown key '" + kv.key + "'");
    }
  }
  s.validate();
  return s;
}

double label_majority_mi_analytic(const SynthSpec& spec, std::size_t relation) {
  spec.validate();
  const auto& rel = spec.relations.at(relation);
  const std::size_t nb = bot_count(spec);
  const std::size_t nh = spec.num_nodes - nb;
  const auto p = scaled_edge_probabilities(rel, nb, nh);
  const std::array<double, 2> class_size{static_cast<double>(nh), static_cast<double>(nb)};
  std::array<std::array<double, 3>, 2> joint{};
  for (int y = 0; y < 2; ++y) {
    // In-neighbors of a class-y node: same-class from (n_y − 1) sources, cross from n_{1−y}.
    const double same_rate = p.same * (class_size[y] - 1.0);
    const double cross_rate = p.cross * class_size[1 - y];
    const double lambda = same_rate + cross_rate;
    const double prior = class_size[y] / static_cast<double>(spec.num_nodes);
    const double pi = lambda > 0.0 ? same_rate / lambda : 0.5;
    const int kmax = static_cast<int>(lambda + 12.0 * std::sqrt(lambda + 1.0) + 20.0);
    double pk = std::exp(-lambda);  // Poisson(0)
    for (int k = 0; k <= kmax; ++k) {
      if (k > 0) pk *= lambda / k;
      // Binomial(k, pi) over same-class count s.
      double win = 0.0, lose = 0.0, tie = 0.0;
      double log_binom = 0.0;
      for (int s = 0; s <= k; ++s) {
        if (s > 0) log_binom += std::log(static_cast<double>(k - s + 1)) - std::log(static_cast<double>(s));
        const double ps = std::exp(log_binom) * std::pow(pi, s) * std::pow(1.0 - pi, k - s);
        if (2 * s > k) win += ps;
        else if (2 * s < k) lose += ps;
        else tie += ps;
      }
      joint[y][y] += prior * pk * win;
      joint[y][1 - y] += prior * pk * lose;
      joint[y][2] += prior * pk * tie;
    }
  }
  return mutual_information(joint);
}

double label_majority_mi_empirical(const HinGraph& g, std::size_t relation) {
  const NeighborIndex index(g);
  std::array<std::array<double, 3>, 2> joint{};
  std::size_t counted = 0;
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    if (g.labels[i] == kUnlabeled) continue;
    int bots = 0, humans = 0;
    for (auto j : index.neighbors(relation, i)) {
      if (g.labels[j] == kBot) ++bots;
      else if (g.labels[j] == kHuman) ++humans;
    }
    const int m = bots > humans ? kBot : (humans > bots ? kHuman : 2);
    joint[g.labels[i]][m] += 1.0;
    ++counted;
  }
  if (counted == 0) return 0.0;
  for (auto& row : joint) {
    for (double& v : row) v /= static_cast<double>(counted);
  }
  return mutual_information(joint);
}

}  // namespace rgtbot
