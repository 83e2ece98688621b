#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rgtbot/hin_graph.h"

namespace rgtbot {

struct RelationSpec {
  std::string name;
  double p_intra = 0.5;  // relative propensity for same-class pairs
  double p_inter = 0.5;  // relative propensity for cross-class pairs
  double mean_degree = 10.0;
  bool operator==(const RelationSpec&) const = default;
};

// Stochastic block model with one block per class and relation-specific
// homophily, plus class-conditional Gaussian features N(±μ·1, I).
struct SynthSpec {
  std::size_t num_nodes = 1000;
  double bot_fraction = 0.5;
  std::vector<RelationSpec> relations;
  std::size_t feature_dim = 16;
  double feature_informativeness = 0.0;  // μ
  double train_split = 0.6;
  double val_split = 0.2;
  double test_split = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SynthSpec&) const = default;
};

// Edge probabilities after rescaling p_intra/p_inter so the expected
// in-degree equals mean_degree, given the realized class sizes.
struct EdgeProbabilities {
  double same = 0.0;
  double cross = 0.0;
};
EdgeProbabilities scaled_edge_probabilities(const RelationSpec& rel, std::size_t num_bots, std::size_t num_humans);

std::size_t bot_count(const SynthSpec& spec);

HinGraph generate(const SynthSpec& spec);

// Named presets: separable-structure, separable-features, hetero-two-relations.
std::vector<std::string> fixture_names();
SynthSpec fixture(std::string_view name, std::size_t num_nodes = 1000);

// Flat key-value text (`relation = name p_intra p_inter mean_degree`, repeated).
std::string to_text(const SynthSpec& spec);
SynthSpec parse_synth_spec(std::string_view content);

// Mutual information (nats) between a node's label and the majority label of
// its in-neighbors under one relation (tie or empty neighborhood is its own
// outcome). The analytic form uses Poisson in-degrees and binomial neighbor
// labels implied by the spec; the empirical form tallies a generated graph.
double label_majority_mi_analytic(const SynthSpec& spec, std::size_t relation);
double label_majority_mi_empirical(const HinGraph& g, std::size_t relation);

}  // namespace rgtbot
