#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cecr/corpus.hpp"
#include "cecr/eval.hpp"
#include "cecr/model.hpp"

namespace cecr {

struct LossTerms {
  bool y = true;    // L_P(y)
  bool yo = true;   // L_P(y^o)
  bool yc = false;  // L_P(y^c), off by default
};

struct TrainConfig {
  double eta = 0.1;    // weight of the classification loss
  double tau = 10.0;   // weight of the mask loss
  double gamma = 1e-5; // L2 regularization weight
  double lr = 0.001;
  int batch = 128;
  int epochs = 30;
  int folds = 5;
  std::uint64_t seed = 1;
  LossTerms loss_terms;
  bool clip = true;
  double clip_norm = 5.0;
  // Early stopping: keep the best-validation checkpoint, stop after
  // `patience` epochs without improvement. 0 disables early stopping.
  int patience = 5;
  double val_fraction = 0.1;
  int parallel_folds = 1;
  bool verbose = false;  // per-epoch validation scores on stderr
};

// Graph-side loss builders. All of them return scalar nodes.
Graph::NodeId loss_p_node(Graph& g, const std::vector<ForwardNodes>& outputs,
                          const std::vector<Targets>& targets,
                          const LossTerms& terms);
// Mask loss over documents with >= 1 PR clause; returns a constant zero node
// when no document qualifies.
Graph::NodeId loss_m_node(Graph& g, const std::vector<ForwardNodes>& outputs,
                          const std::vector<Targets>& targets);
// eta * L_p + tau * L_m + gamma * ||theta||^2 over the bound parameters.
Graph::NodeId total_loss_node(Graph& g, Graph::NodeId loss_p,
                              Graph::NodeId loss_m,
                              const std::vector<Graph::NodeId>& param_nodes,
                              const TrainConfig& cfg);

struct AdamState {
  std::vector<Tensor> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void init(const std::vector<Parameter*>& params);
};

void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               double lr);

// Scales all gradients so their global L2 norm is at most max_norm.
void clip_gradients(const std::vector<Parameter*>& params, double max_norm);

struct FoldSplit {
  std::vector<std::vector<std::string>> fold_ids;
};

// Deterministic shuffled partition of document ids into `folds` folds.
FoldSplit split_folds(const Corpus& corpus, int folds, std::uint64_t seed);

// Classification + mask metrics of `params` on the given documents.
FoldMetrics evaluate_docs(ModelParams& params,
                          const std::vector<const Document*>& docs);

struct FoldOutcome {
  FoldMetrics metrics;
  ModelParams params;
  int epochs_ran = 0;
};

FoldOutcome train_fold(const std::vector<const Document*>& train_docs,
                       const std::vector<const Document*>& test_docs,
                       const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg,
                       const EmbeddingTable& emb, std::uint64_t fold_seed);

struct CvResult {
  ReportRow row;
  std::vector<int> epochs_ran;
  // Parameters of the last fold; useful for checkpointing demos.
  ModelParams last_fold_params;
};

CvResult run_cv(const Corpus& corpus, const ModelConfig& model_cfg,
                const TrainConfig& train_cfg, const EmbeddingTable& emb,
                const std::string& row_label);

struct GridPoint {
  double eta = 0.0, tau = 0.0;
  double score = 0.0;  // mean over folds of (F1 + gF1) / 2
};

std::vector<GridPoint> grid_search(const Corpus& corpus,
                                   const ModelConfig& model_cfg,
                                   const TrainConfig& base,
                                   const EmbeddingTable& emb,
                                   const std::vector<double>& etas,
                                   const std::vector<double>& taus);

}  // namespace cecr
