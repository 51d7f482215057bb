#include "cecr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <thread>

#include "cecr/kernels.hpp"

namespace cecr {

namespace {

// -log(prob[label])
Graph::NodeId ce_node(Graph& g, Graph::NodeId prob_vec, int label) {
  if (prob_vec < 0)
    throw ValidationError(
        "loss term enabled for a prediction head that was not computed");
  return g.scale(g.log(g.pick(prob_vec, static_cast<std::size_t>(label))),
                 -1.0);
}

Graph::NodeId mean_of(Graph& g, const std::vector<Graph::NodeId>& scalars) {
  return g.mean(g.concat(scalars));
}

}  // namespace

Graph::NodeId loss_p_node(Graph& g, const std::vector<ForwardNodes>& outputs,
                          const std::vector<Targets>& targets,
                          const LossTerms& terms) {
  std::vector<Graph::NodeId> components;
  auto add_term = [&](auto head_of, int Targets::*label) {
    std::vector<Graph::NodeId> per_doc;
    per_doc.reserve(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i)
      per_doc.push_back(ce_node(g, head_of(outputs[i]), targets[i].*label));
    components.push_back(mean_of(g, per_doc));
  };
  if (terms.y)
    add_term([](const ForwardNodes& o) { return o.p_y; }, &Targets::y);
  if (terms.yo)
    add_term([](const ForwardNodes& o) { return o.p_yo; }, &Targets::y_o);
  if (terms.yc)
    add_term([](const ForwardNodes& o) { return o.p_yc; }, &Targets::y);
  if (components.empty()) return g.input(Tensor::scalar(0.0), "zero");
  Graph::NodeId total = components[0];
  for (std::size_t i = 1; i < components.size(); ++i)
    total = g.add(total, components[i]);
  return total;
}

Graph::NodeId loss_m_node(Graph& g, const std::vector<ForwardNodes>& outputs,
                          const std::vector<Targets>& targets) {
  std::vector<Graph::NodeId> per_doc;
  Graph::NodeId one = -1;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const Targets& t = targets[i];
    const bool has_pr =
        std::any_of(t.mask.begin(), t.mask.end(), [](int m) { return m == 1; });
    if (!has_pr || outputs[i].mask_probs.empty()) continue;
    std::vector<Graph::NodeId> slot_terms;
    for (std::size_t j = 0; j < t.mask.size(); ++j) {
      Graph::NodeId p = outputs[i].mask_probs[j];
      if (t.mask[j] == 1) {
        slot_terms.push_back(g.log(p));
      } else {
        if (one < 0) one = g.input(Tensor::scalar(1.0), "one");
        slot_terms.push_back(g.log(g.add(one, g.scale(p, -1.0))));
      }
    }
    // average over this document's valid slots, negated
    per_doc.push_back(g.scale(mean_of(g, slot_terms), -1.0));
  }
  if (per_doc.empty()) return g.input(Tensor::scalar(0.0), "zero");
  return mean_of(g, per_doc);
}

Graph::NodeId total_loss_node(Graph& g, Graph::NodeId loss_p,
                              Graph::NodeId loss_m,
                              const std::vector<Graph::NodeId>& param_nodes,
                              const TrainConfig& cfg) {
  Graph::NodeId total = g.add(g.scale(loss_p, cfg.eta), g.scale(loss_m, cfg.tau));
  if (cfg.gamma != 0.0) {
    Graph::NodeId reg = -1;
    for (Graph::NodeId p : param_nodes) {
      Graph::NodeId sq = g.sum(g.mul(p, p));
      reg = reg < 0 ? sq : g.add(reg, sq);
    }
    if (reg >= 0) total = g.add(total, g.scale(reg, cfg.gamma));
  }
  return total;
}

void AdamState::init(const std::vector<Parameter*>& params) {
  m.clear();
  v.clear();
  for (const Parameter* p : params) {
    m.push_back(Tensor::zeros(p->value.shape));
    v.push_back(Tensor::zeros(p->value.shape));
  }
  step = 0;
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               double lr) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double grad = p.grad.data[i];
      double& m = state.m[k].data[i];
      double& v = state.v[k].data[i];
      m = state.beta1 * m + (1.0 - state.beta1) * grad;
      v = state.beta2 * v + (1.0 - state.beta2) * grad * grad;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void clip_gradients(const std::vector<Parameter*>& params, double max_norm) {
  double sq = 0.0;
  for (const Parameter* p : params)
    sq += kernels::dot(p->grad.data.data(), p->grad.data.data(),
                       p->grad.size());
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double factor = max_norm / norm;
  for (Parameter* p : params)
    kernels::scale(factor, p->grad.data.data(), p->grad.size());
}

FoldSplit split_folds(const Corpus& corpus, int folds, std::uint64_t seed) {
  if (folds < 2) throw ValidationError("folds must be >= 2");
  std::vector<std::size_t> order(corpus.documents.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed ^ 0xf01d5eedull);
  std::shuffle(order.begin(), order.end(), rng.engine());
  FoldSplit split;
  split.fold_ids.resize(folds);
  for (std::size_t i = 0; i < order.size(); ++i)
    split.fold_ids[i % folds].push_back(corpus.documents[order[i]].id);
  return split;
}

FoldMetrics evaluate_docs(ModelParams& params,
                          const std::vector<const Document*>& docs) {
  ConfusionCounts counts;
  std::vector<ScoredMask> scored;
  const bool has_mask = params.config.use_cmm;
  for (const Document* doc : docs) {
    const Targets truth = derive_targets(*doc);
    const ForwardOutput out = run_forward(params, *doc);
    const int pred = out.p_y[1] >= out.p_y[0] ? 1 : 0;
    if (pred == 1 && truth.y == 1) ++counts.tp;
    else if (pred == 1 && truth.y == 0) ++counts.fp;
    else if (pred == 0 && truth.y == 1) ++counts.fn;
    else ++counts.tn;
    if (has_mask) scored.push_back({truth.mask, out.mask_probs});
  }
  FoldMetrics m;
  const Prf1 c = prf1(counts);
  m.precision = c.precision;
  m.recall = c.recall;
  m.f1 = c.f1;
  if (has_mask) {
    m.has_mask = true;
    m.mask = mask_metrics(scored, params.config.mask_threshold);
  }
  return m;
}

namespace {

double validation_score(const FoldMetrics& m) {
  // With the mask head on, checkpoint selection balances both tasks the way
  // the grid-search metric does.
  return m.has_mask ? 0.5 * (m.f1 + m.mask.gf1) : m.f1;
}

void train_batch(ModelParams& params, const std::vector<const Document*>& docs,
                 const TrainConfig& cfg, AdamState& adam, RngStream& rng) {
  Graph g;
  BoundParams bound = bind_params(g, params);
  std::vector<ForwardNodes> outputs;
  std::vector<Targets> targets;
  outputs.reserve(docs.size());
  targets.reserve(docs.size());
  for (const Document* doc : docs) {
    outputs.push_back(forward_doc(g, bound, params, *doc, /*train=*/true, rng));
    targets.push_back(derive_targets(*doc));
  }
  Graph::NodeId lp = loss_p_node(g, outputs, targets, cfg.loss_terms);
  Graph::NodeId lm = loss_m_node(g, outputs, targets);
  Graph::NodeId total = total_loss_node(g, lp, lm, bound.all_ids, cfg);
  params.zero_grads();
  g.backward(total);
  const std::vector<Parameter*> all = params.all();
  if (cfg.clip) clip_gradients(all, cfg.clip_norm);
  adam_step(all, adam, cfg.lr);
}

}  // namespace

FoldOutcome train_fold(const std::vector<const Document*>& train_docs,
                       const std::vector<const Document*>& test_docs,
                       const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg,
                       const EmbeddingTable& emb, std::uint64_t fold_seed) {
  if (test_docs.empty()) throw ValidationError("fold with zero test documents");
  if (train_docs.empty())
    throw ValidationError("fold with zero training documents");

  ModelConfig cfg = model_cfg;
  cfg.compute_yo = cfg.use_pam || train_cfg.loss_terms.yo;
  ModelParams params = init_params(cfg, emb, fold_seed);
  AdamState adam;
  adam.init(params.all());

  RngStream rng(fold_seed ^ 0x7261696eull);

  // Hold out a validation slice of the training documents for checkpoint
  // selection.
  std::vector<const Document*> pool = train_docs;
  std::shuffle(pool.begin(), pool.end(), rng.engine());
  const std::size_t n_val = std::min(
      pool.size() - 1,
      static_cast<std::size_t>(train_cfg.val_fraction * pool.size()));
  std::vector<const Document*> val_docs(pool.begin(), pool.begin() + n_val);
  std::vector<const Document*> fit_docs(pool.begin() + n_val, pool.end());
  const bool use_val = train_cfg.patience > 0 && !val_docs.empty();

  ModelParams best = params;
  double best_score = -1.0;
  int stale = 0;
  FoldOutcome outcome;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    std::shuffle(fit_docs.begin(), fit_docs.end(), rng.engine());
    for (std::size_t start = 0; start < fit_docs.size();
         start += train_cfg.batch) {
      const std::size_t stop =
          std::min(fit_docs.size(), start + train_cfg.batch);
      std::vector<const Document*> batch(fit_docs.begin() + start,
                                         fit_docs.begin() + stop);
      train_batch(params, batch, train_cfg, adam, rng);
    }
    outcome.epochs_ran = epoch + 1;
    if (!use_val) continue;
    const double score = validation_score(evaluate_docs(params, val_docs));
    if (train_cfg.verbose)
      std::fprintf(stderr, "fold seed %llu epoch %d val score %.4f\n",
                   static_cast<unsigned long long>(fold_seed), epoch + 1,
                   score);
    if (score > best_score) {
      best_score = score;
      best = params;
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= train_cfg.patience) break;
    if (best_score >= 1.0) break;  // cannot improve further
  }
  if (!use_val) best = params;

  outcome.metrics = evaluate_docs(best, test_docs);
  outcome.params = std::move(best);
  return outcome;
}

CvResult run_cv(const Corpus& corpus, const ModelConfig& model_cfg,
                const TrainConfig& train_cfg, const EmbeddingTable& emb,
                const std::string& row_label) {
  const FoldSplit split = split_folds(corpus, train_cfg.folds, train_cfg.seed);
  std::unordered_map<std::string, const Document*> by_id;
  for (const Document& d : corpus.documents) by_id.emplace(d.id, &d);

  RngStream root(train_cfg.seed);
  const int folds = train_cfg.folds;
  std::vector<FoldOutcome> outcomes(folds);

  auto run_one = [&](int f) {
    std::vector<const Document*> test_docs, train_docs;
    for (int k = 0; k < folds; ++k)
      for (const std::string& id : split.fold_ids[k])
        (k == f ? test_docs : train_docs).push_back(by_id.at(id));
    outcomes[f] = train_fold(train_docs, test_docs, model_cfg, train_cfg, emb,
                             root.split(static_cast<std::uint64_t>(f)).seed());
  };

  const int workers = std::max(1, std::min(train_cfg.parallel_folds, folds));
  if (workers == 1) {
    for (int f = 0; f < folds; ++f) run_one(f);
  } else {
    std::vector<std::thread> threads;
    for (int base = 0; base < folds; base += workers) {
      for (int f = base; f < std::min(folds, base + workers); ++f)
        threads.emplace_back(run_one, f);
      for (std::thread& t : threads) t.join();
      threads.clear();
    }
  }

  CvResult result;
  result.row.label = row_label;
  for (int f = 0; f < folds; ++f) {
    result.row.folds.push_back(outcomes[f].metrics);
    result.epochs_ran.push_back(outcomes[f].epochs_ran);
  }
  result.row.mean = mean_metrics(result.row.folds);
  result.last_fold_params = std::move(outcomes[folds - 1].params);
  return result;
}

std::vector<GridPoint> grid_search(const Corpus& corpus,
                                   const ModelConfig& model_cfg,
                                   const TrainConfig& base,
                                   const EmbeddingTable& emb,
                                   const std::vector<double>& etas,
                                   const std::vector<double>& taus) {
  std::vector<GridPoint> out;
  for (double eta : etas) {
    for (double tau : taus) {
      TrainConfig cfg = base;
      cfg.eta = eta;
      cfg.tau = tau;
      const CvResult cv = run_cv(corpus, model_cfg, cfg, emb, "grid");
      GridPoint p;
      p.eta = eta;
      p.tau = tau;
      p.score = 0.5 * (cv.row.mean.f1 + cv.row.mean.mask.gf1);
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace cecr
