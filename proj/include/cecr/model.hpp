#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cecr/corpus.hpp"
#include "cecr/ndiff.hpp"
#include "cecr/rng.hpp"

namespace cecr {

enum class EncoderKind { CC, BL, SA };

const char* to_string(EncoderKind e);
EncoderKind encoder_from_string(const std::string& s);

struct ModelConfig {
  int embed_dim = 32;
  int hidden = 100;
  EncoderKind encoder = EncoderKind::SA;
  bool use_cmm = true;
  bool use_pam = true;
  // The no-context head is also needed without PAM when its loss term is on.
  bool compute_yo = true;
  int heads = 1;
  int max_clause_len = 0;   // l, corpus-derived
  int max_context = 0;      // L, corpus-derived
  int max_causes = 1;       // corpus-derived
  double dropout = 0.2;
  double mask_threshold = 0.1;

  int clause_width() const { return 2 * hidden; }
  int x_width() const { return (max_causes + 1) * clause_width(); }
  int xhat_width() const;
};

struct LstmParams {
  Parameter w_ih;  // (4H, in)
  Parameter w_hh;  // (4H, H)
  Parameter bias;  // (4H)
};

struct ModelParams {
  ModelConfig config;
  std::unordered_map<std::string, int> vocab;  // token -> embedding row
  int unk_row = 0;

  Parameter embedding;  // (V, d), trainable
  LstmParams word_fwd, word_bwd;
  Parameter w_cls;  // (1, 2H) attention-pooling weights
  LstmParams clause_fwd, clause_bwd;  // allocated for the BL encoder only
  Parameter w_con, b_con;             // allocated when use_cmm
  Parameter w_c;                      // (2, xhat_width)
  Parameter w_o;                      // (2, x_width), when compute_yo

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  double squared_l2() const;
  void zero_grads();

  int token_row(const std::string& token) const;
};

// Uniform [-0.1, 0.1] init, embedding rows taken from the table.
ModelParams init_params(const ModelConfig& cfg, const EmbeddingTable& emb,
                        std::uint64_t seed);

// Forward-pass handles into a Graph; ids are -1 where a head is disabled.
struct ForwardNodes {
  Graph::NodeId p_y = -1;
  Graph::NodeId p_yo = -1;
  Graph::NodeId p_yc = -1;
  Graph::NodeId lambda = -1;
  std::vector<Graph::NodeId> mask_probs;  // one scalar node per context clause
};

// Plain-value view of a forward pass.
struct ForwardOutput {
  std::vector<double> p_y;   // 2-vector
  std::vector<double> p_yo;  // empty when the head is off
  std::vector<double> p_yc;
  double lambda = 0.0;
  std::vector<double> mask_probs;  // per valid context slot
};

// Node ids of the parameters bound into one graph; bind once per batch.
struct BoundParams {
  Graph::NodeId embedding = -1;
  Graph::NodeId word_fwd_w_ih = -1, word_fwd_w_hh = -1, word_fwd_b = -1;
  Graph::NodeId word_bwd_w_ih = -1, word_bwd_w_hh = -1, word_bwd_b = -1;
  Graph::NodeId w_cls = -1;
  Graph::NodeId clause_fwd_w_ih = -1, clause_fwd_w_hh = -1, clause_fwd_b = -1;
  Graph::NodeId clause_bwd_w_ih = -1, clause_bwd_w_hh = -1, clause_bwd_b = -1;
  Graph::NodeId w_con = -1, b_con = -1;
  Graph::NodeId w_c = -1, w_o = -1;
  std::vector<Graph::NodeId> all_ids;  // every bound id, for regularization
};

BoundParams bind_params(Graph& g, ModelParams& params);

// BiLSTM + attention pooling over the clause tokens (2H wide result).
Graph::NodeId embed_clause(Graph& g, const BoundParams& bound,
                           const ModelParams& params, const Clause& clause);

// Dot-product attention of one anchor vector over the (gated) context
// vectors, with a residual connection; empty context returns the anchor.
Graph::NodeId sa_attend(Graph& g, Graph::NodeId anchor,
                        const std::vector<Graph::NodeId>& context);

// Convex blend P(y) = lambda * P(y^o) + (1 - lambda) * P(y^c) with
// lambda = P(y^o = 1). Optionally reports the lambda node.
Graph::NodeId pam_blend(Graph& g, Graph::NodeId p_yo, Graph::NodeId p_yc,
                        Graph::NodeId* lambda_out = nullptr);

ForwardNodes forward_doc(Graph& g, const BoundParams& bound,
                         ModelParams& params, const Document& doc, bool train,
                         RngStream& rng);

ForwardOutput read_output(const Graph& g, const ForwardNodes& nodes);

// Convenience wrapper building a throwaway graph (evaluation path).
ForwardOutput run_forward(ModelParams& params, const Document& doc);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace cecr
