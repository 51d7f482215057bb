#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "cecr/synth.hpp"
#include "cecr/train.hpp"

using namespace cecr;

namespace {

ForwardNodes fake_output(Graph& g, std::vector<double> p_y,
                         std::vector<double> p_yo = {},
                         std::vector<double> masks = {}) {
  ForwardNodes o;
  o.p_y = g.input(Tensor::vector(std::move(p_y)));
  o.p_yc = o.p_y;
  if (!p_yo.empty()) o.p_yo = g.input(Tensor::vector(std::move(p_yo)));
  for (double m : masks) o.mask_probs.push_back(g.input(Tensor::scalar(m)));
  return o;
}

Targets target(int y, int y_o, std::vector<int> mask = {}) {
  Targets t;
  t.y = y;
  t.y_o = y_o;
  t.mask = std::move(mask);
  return t;
}

}  // namespace

TEST_CASE("classification loss on hand examples") {
  Graph g;
  LossTerms only_y{true, false, false};

  // Perfect prediction: -log 1 = 0.
  auto perfect = fake_output(g, {0.0, 1.0});
  CHECK(g.value(loss_p_node(g, {perfect}, {target(1, 1)}, only_y)).item() ==
        doctest::Approx(0.0));

  // P(y=1) = 0.5 -> -ln 0.5.
  auto coin = fake_output(g, {0.5, 0.5});
  CHECK(g.value(loss_p_node(g, {coin}, {target(1, 1)}, only_y)).item() ==
        doctest::Approx(0.6931).epsilon(1e-4));
}

TEST_CASE("each enabled term adds its mean cross-entropy") {
  Graph g;
  auto o = fake_output(g, {0.5, 0.5}, {0.5, 0.5});
  const Targets t = target(1, 0);
  const double base =
      g.value(loss_p_node(g, {o}, {t}, LossTerms{true, false, false})).item();
  const double with_yo =
      g.value(loss_p_node(g, {o}, {t}, LossTerms{true, true, false})).item();
  const double with_all =
      g.value(loss_p_node(g, {o}, {t}, LossTerms{true, true, true})).item();
  CHECK(with_yo == doctest::Approx(base + std::log(2.0)));
  CHECK(with_all == doctest::Approx(base + 2.0 * std::log(2.0)));
}

TEST_CASE("missing prediction head for an enabled term is an error") {
  Graph g;
  auto o = fake_output(g, {0.5, 0.5});  // no p_yo head
  CHECK_THROWS_AS(loss_p_node(g, {o}, {target(1, 1)}, LossTerms{true, true, false}),
                  ValidationError);
}

TEST_CASE("mask loss on hand examples") {
  Graph g;
  // No PR clause anywhere -> zero.
  auto no_pr = fake_output(g, {0.5, 0.5}, {}, {0.5, 0.5});
  CHECK(g.value(loss_m_node(g, {no_pr}, {target(1, 1, {0, 0})})).item() == 0.0);

  // Perfect mask -> zero (up to the log floor).
  auto perfect = fake_output(g, {0.5, 0.5}, {}, {1.0, 0.0});
  CHECK(g.value(loss_m_node(g, {perfect}, {target(1, 0, {1, 0})})).item() ==
        doctest::Approx(0.0).epsilon(1e-9));

  // Uniform 0.5 on (1,0) -> -(ln .5 + ln .5)/2 = ln 2.
  auto coin = fake_output(g, {0.5, 0.5}, {}, {0.5, 0.5});
  CHECK(g.value(loss_m_node(g, {coin}, {target(1, 0, {1, 0})})).item() ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("mask loss averages only over documents with PR clauses") {
  Graph g;
  auto pr = fake_output(g, {0.5, 0.5}, {}, {0.5, 0.5});
  auto ir_only = fake_output(g, {0.5, 0.5}, {}, {0.9, 0.9});
  const double both = g.value(loss_m_node(g, {pr, ir_only},
                                          {target(1, 0, {1, 0}),
                                           target(1, 1, {0, 0})}))
                          .item();
  const double alone =
      g.value(loss_m_node(g, {pr}, {target(1, 0, {1, 0})})).item();
  CHECK(both == doctest::Approx(alone));
}

TEST_CASE("mask loss is invariant to document order") {
  Graph g;
  auto a = fake_output(g, {0.5, 0.5}, {}, {0.3, 0.6});
  auto b = fake_output(g, {0.5, 0.5}, {}, {0.8});
  const double fwd = g.value(loss_m_node(g, {a, b},
                                         {target(1, 0, {1, 0}),
                                          target(1, 0, {1})}))
                         .item();
  const double rev = g.value(loss_m_node(g, {b, a},
                                         {target(1, 0, {1}),
                                          target(1, 0, {1, 0})}))
                         .item();
  CHECK(fwd == doctest::Approx(rev).epsilon(1e-15));
}

TEST_CASE("total loss combines the weighted terms") {
  Graph g;
  auto lp = g.input(Tensor::scalar(1.0));
  auto lm = g.input(Tensor::scalar(0.1));

  TrainConfig off;
  off.eta = off.tau = off.gamma = 0.0;
  CHECK(g.value(total_loss_node(g, lp, lm, {}, off)).item() == 0.0);

  TrainConfig cfg;
  cfg.eta = 0.1;
  cfg.tau = 10.0;
  cfg.gamma = 0.0;
  CHECK(g.value(total_loss_node(g, lp, lm, {}, cfg)).item() ==
        doctest::Approx(1.1));

  // A single weight of value 2 contributes gamma * 4.
  Parameter w("w", Tensor::scalar(2.0));
  cfg.gamma = 1e-5;
  auto wid = g.param(w);
  CHECK(g.value(total_loss_node(g, lp, lm, {wid}, cfg)).item() ==
        doctest::Approx(1.1 + 4e-5));
}

TEST_CASE("adam first step moves by about lr") {
  Parameter p("p", Tensor::vector({1.0, 1.0}));
  p.grad = Tensor::vector({1.0, 1.0});
  AdamState state;
  state.init({&p});
  adam_step({&p}, state, 0.001);
  for (double v : p.value.data)
    CHECK(v == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
}

TEST_CASE("adam leaves parameters alone for zero gradients") {
  Parameter p("p", Tensor::vector({0.5, -0.5}));
  p.zero_grad();
  AdamState state;
  state.init({&p});
  adam_step({&p}, state, 0.01);
  CHECK(p.value.data == std::vector<double>{0.5, -0.5});
}

TEST_CASE("gradient clipping rescales to the target norm") {
  Parameter p("p", Tensor::vector({3.0, 4.0}));
  p.grad = Tensor::vector({30.0, 40.0});  // norm 50
  clip_gradients({&p}, 5.0);
  CHECK(p.grad.data[0] == doctest::Approx(3.0));
  CHECK(p.grad.data[1] == doctest::Approx(4.0));
  // Below the limit: untouched.
  p.grad = Tensor::vector({0.3, 0.4});
  clip_gradients({&p}, 5.0);
  CHECK(p.grad.data[0] == doctest::Approx(0.3));
}

TEST_CASE("fold split partitions document ids") {
  SynthConfig cfg;
  cfg.n_docs = 57;
  const Corpus corpus = generate_corpus(cfg).corpus;
  const FoldSplit split = split_folds(corpus, 5, 9);
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& fold : split.fold_ids) {
    CHECK(!fold.empty());
    for (const std::string& id : fold) {
      CHECK(seen.insert(id).second);
      ++total;
    }
  }
  CHECK(total == corpus.documents.size());
  // Balanced within one document.
  for (const auto& fold : split.fold_ids) {
    CHECK(fold.size() >= 57 / 5);
    CHECK(fold.size() <= 57 / 5 + 1);
  }
  // Deterministic.
  const FoldSplit again = split_folds(corpus, 5, 9);
  CHECK(split.fold_ids == again.fold_ids);
}

TEST_CASE("with tau zero the gate still gets indirect gradients") {
  SynthConfig scfg;
  scfg.n_docs = 30;
  scfg.seed = 21;
  scfg.fraction_conditional = 0.6;
  scfg.fraction_missing_condition = 0.0;
  const SynthOutput synth = generate_corpus(scfg);

  ModelConfig mc;
  mc.embed_dim = 8;
  mc.hidden = 6;
  mc.encoder = EncoderKind::SA;
  mc.use_cmm = true;
  mc.use_pam = true;
  mc.dropout = 0.0;
  mc.max_clause_len = scfg.clause_len;
  mc.max_context = scfg.max_context;
  mc.max_causes = 1;
  const EmbeddingTable emb = generate_embeddings(scfg, mc.embed_dim);

  std::vector<const Document*> docs;
  for (const Document& d : synth.corpus.documents)
    if (d.y_c == 2) docs.push_back(&d);
  REQUIRE(!docs.empty());

  auto w_con_grad = [&](double tau) {
    ModelParams params = init_params(mc, emb, 5);
    TrainConfig tc;
    tc.tau = tau;
    tc.gamma = 0.0;
    Graph g;
    BoundParams bound = bind_params(g, params);
    RngStream rng(0);
    std::vector<ForwardNodes> outs;
    std::vector<Targets> tgts;
    for (const Document* d : docs) {
      outs.push_back(forward_doc(g, bound, params, *d, false, rng));
      tgts.push_back(derive_targets(*d));
    }
    auto total = total_loss_node(
        g, loss_p_node(g, outs, tgts, tc.loss_terms),
        loss_m_node(g, outs, tgts), bound.all_ids, tc);
    params.zero_grads();
    g.backward(total);
    return params.w_con.grad;
  };

  const Tensor direct = w_con_grad(10.0);
  const Tensor indirect = w_con_grad(0.0);
  double norm_indirect = 0.0, diff = 0.0;
  for (std::size_t i = 0; i < direct.size(); ++i) {
    norm_indirect += indirect.data[i] * indirect.data[i];
    diff += std::abs(direct.data[i] - indirect.data[i]);
  }
  CHECK(norm_indirect > 0.0);  // encoder path alone feeds the gate
  CHECK(diff > 1e-8);          // the mask loss adds a distinct direct path
}

TEST_CASE("a few training steps reduce the loss on a toy corpus") {
  SynthConfig scfg;
  scfg.n_docs = 40;
  scfg.seed = 2;
  const SynthOutput synth = generate_corpus(scfg);

  ModelConfig mc;
  mc.embed_dim = 8;
  mc.hidden = 8;
  mc.use_cmm = true;
  mc.use_pam = true;
  mc.dropout = 0.0;
  mc.max_clause_len = scfg.clause_len;
  mc.max_context = scfg.max_context;
  mc.max_causes = 1;
  const EmbeddingTable emb = generate_embeddings(scfg, mc.embed_dim);

  std::vector<const Document*> docs;
  for (const Document& d : synth.corpus.documents) docs.push_back(&d);

  TrainConfig tc;
  tc.epochs = 8;
  tc.batch = 16;
  tc.patience = 0;
  const FoldOutcome out = train_fold(docs, docs, mc, tc, emb, 3);
  CHECK(out.epochs_ran >= 1);
  CHECK(out.metrics.f1 > 0.4);  // learnable toy problem, loose bound
}

TEST_CASE("cross-validation is deterministic") {
  SynthConfig scfg;
  scfg.n_docs = 40;
  scfg.seed = 8;
  const SynthOutput synth = generate_corpus(scfg);
  const EmbeddingTable emb = generate_embeddings(scfg, 8);

  ModelConfig mc;
  mc.embed_dim = 8;
  mc.hidden = 6;
  mc.use_cmm = true;
  mc.use_pam = true;
  mc.max_clause_len = scfg.clause_len;
  mc.max_context = scfg.max_context;
  mc.max_causes = 1;

  TrainConfig tc;
  tc.epochs = 2;
  tc.folds = 2;
  tc.batch = 16;

  const CvResult a = run_cv(synth.corpus, mc, tc, emb, "toy");
  const CvResult b = run_cv(synth.corpus, mc, tc, emb, "toy");
  const RunReport ra = make_report({a.row}, {});
  const RunReport rb = make_report({b.row}, {});
  CHECK(format_report(ra) == format_report(rb));

  // Parallel fold execution must not change the result.
  TrainConfig par = tc;
  par.parallel_folds = 2;
  const CvResult c = run_cv(synth.corpus, mc, par, emb, "toy");
  CHECK(format_report(make_report({c.row}, {})) == format_report(ra));
}
