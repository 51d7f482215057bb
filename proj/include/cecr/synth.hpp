#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>

#include "cecr/corpus.hpp"
#include "cecr/sampler.hpp"

namespace cecr {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Ground truth for synthetic corpora. Event, emotion and condition tokens
// live in disjoint string ranges ("ev#", "em#", "cond#"); filler tokens are
// "w#". A (event, emotion) key appears either in pairs or in
// conditional_pairs, never both.
struct CausalTable {
  // non-conditional: (event, emotion) -> always causal
  std::map<std::pair<std::string, std::string>, bool> pairs;
  // conditional: (event, emotion) -> condition token that must be in context
  std::map<std::pair<std::string, std::string>, std::string> conditional_pairs;
  // Emotion tokens that form no causal pair with any event. Emotion-type
  // negative samples draw their replacement clause from these.
  std::vector<std::string> inert_emotions;

  // Condition token for the document's ECP, empty if non-conditional.
  std::string condition_for(const std::string& event,
                            const std::string& emotion) const;
};

struct SynthConfig {
  int vocab_size = 200;
  int n_docs = 1000;
  int clause_len = 5;    // l: maximum tokens per clause
  int max_context = 4;   // L: maximum context clauses per document
  double fraction_conditional = 0.4;
  double fraction_missing_condition = 0.2;
  std::uint64_t seed = 1;
};

struct SynthOutput {
  Corpus corpus;
  CausalTable table;
};

SynthOutput generate_corpus(const SynthConfig& cfg);

// Recomputes targets from token content alone; must agree with
// derive_targets on every generated document and on every sampler output
// derived from one.
Targets oracle_label(const Document& doc, const CausalTable& table);

// Build options wired for synthetic data: replacement context excludes every
// condition token in the table (so "a condition token appears in context"
// keeps exactly one meaning: the pair's own condition is present), and
// emotion-type samples draw their replacement clause from the table's inert
// emotions (so they are guaranteed non-causal).
BuildOptions synth_build_options(const CausalTable& table, int n);

CausalTable load_causal_table(const std::string& path);
void save_causal_table(const CausalTable& table, const std::string& path);

// Seeded uniform [-0.1, 0.1] embeddings for every token role in cfg's
// vocabulary plus the UNK row.
EmbeddingTable generate_embeddings(const SynthConfig& cfg, int dim);

}  // namespace cecr
