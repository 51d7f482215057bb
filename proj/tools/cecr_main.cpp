#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "cecr/corpus.hpp"
#include "cecr/eval.hpp"
#include "cecr/gradcheck.hpp"
#include "cecr/kernels.hpp"
#include "cecr/model.hpp"
#include "cecr/sampler.hpp"
#include "cecr/synth.hpp"
#include "cecr/train.hpp"

#include <json.hpp>

namespace {

using namespace cecr;

struct TrainFlags {
  std::string corpus_path;
  std::string embeddings_path;
  std::string encoder = "SA";
  bool use_cmm = true;
  bool use_pam = true;
  std::string loss_terms = "y,yo";
  int hidden = 100;
  double dropout = 0.2;
  double threshold = 0.1;
  TrainConfig train;
  std::string report_path;
  std::string json_path;
  std::string checkpoint_path;
  std::string label;
};

LossTerms parse_loss_terms(const std::string& spec) {
  LossTerms terms{false, false, false};
  std::string item;
  std::istringstream in(spec);
  while (std::getline(in, item, ',')) {
    if (item == "y") terms.y = true;
    else if (item == "yo") terms.yo = true;
    else if (item == "yc") terms.yc = true;
    else if (!item.empty())
      throw CLI::ValidationError("--loss-terms",
                                 "unknown loss term: " + item);
  }
  return terms;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--corpus", f.corpus_path, "Corpus file (JSON lines)")
      ->required();
  cmd->add_option("--embeddings", f.embeddings_path, "Embedding file")
      ->required();
  cmd->add_option("--encoder", f.encoder,
                  "Context encoder: CC, BL or SA")
      ->capture_default_str();
  cmd->add_flag("--cmm,!--no-cmm", f.use_cmm, "Context masking module")
      ->capture_default_str();
  cmd->add_flag("--pam,!--no-pam", f.use_pam, "Prediction aggregation module")
      ->capture_default_str();
  cmd->add_option("--loss-terms", f.loss_terms,
                  "Comma list of classification loss terms (y, yo, yc)")
      ->capture_default_str();
  cmd->add_option("--hidden", f.hidden, "BiLSTM hidden units")
      ->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "Dropout rate")
      ->capture_default_str();
  cmd->add_option("--threshold", f.threshold, "Mask classification threshold")
      ->capture_default_str();
  cmd->add_option("--eta", f.train.eta, "Classification loss weight")
      ->capture_default_str();
  cmd->add_option("--tau", f.train.tau, "Mask loss weight")
      ->capture_default_str();
  cmd->add_option("--gamma", f.train.gamma, "L2 regularization weight")
      ->capture_default_str();
  cmd->add_option("--lr", f.train.lr, "Adam learning rate")
      ->capture_default_str();
  cmd->add_option("--batch", f.train.batch, "Batch size")
      ->capture_default_str();
  cmd->add_option("--epochs", f.train.epochs, "Maximum training epochs")
      ->capture_default_str();
  cmd->add_option("--folds", f.train.folds, "Cross-validation folds")
      ->capture_default_str();
  cmd->add_option("--seed", f.train.seed, "Root random seed")
      ->capture_default_str();
  cmd->add_option("--patience", f.train.patience,
                  "Early-stopping patience in epochs (0 disables)")
      ->capture_default_str();
  cmd->add_flag("--clip,!--no-clip", f.train.clip,
                "Clip gradients at global norm 5")
      ->capture_default_str();
  cmd->add_option("--parallel-folds", f.train.parallel_folds,
                  "Folds trained concurrently")
      ->capture_default_str();
  cmd->add_flag("--verbose", f.train.verbose,
                "Per-epoch validation scores on stderr");
}

ModelConfig model_config_from_flags(const TrainFlags& f, const Corpus& corpus) {
  ModelConfig cfg;
  cfg.hidden = f.hidden;
  cfg.encoder = encoder_from_string(f.encoder);
  cfg.use_cmm = f.use_cmm;
  cfg.use_pam = f.use_pam;
  cfg.dropout = f.dropout;
  cfg.mask_threshold = f.threshold;
  cfg.max_context = corpus.max_context();
  cfg.max_causes = corpus.max_causes();
  std::size_t l = 0;
  for (const Document& d : corpus.documents)
    for (const Clause& c : d.clauses) l = std::max(l, c.size());
  cfg.max_clause_len = static_cast<int>(l);
  return cfg;
}

std::string variant_label(const TrainFlags& f) {
  std::string label = "WE-" + f.encoder;
  if (f.use_cmm) label += "+C";
  if (f.use_pam) label += "+P";
  return label;
}

std::vector<std::string> config_echo(const TrainFlags& f) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "encoder=%s cmm=%d pam=%d loss_terms=%s hidden=%d dropout=%g "
                "threshold=%g",
                f.encoder.c_str(), f.use_cmm ? 1 : 0, f.use_pam ? 1 : 0,
                f.loss_terms.c_str(), f.hidden, f.dropout, f.threshold);
  std::vector<std::string> echo{buf};
  std::snprintf(buf, sizeof(buf),
                "eta=%g tau=%g gamma=%g lr=%g batch=%d epochs=%d folds=%d "
                "seed=%llu",
                f.train.eta, f.train.tau, f.train.gamma, f.train.lr,
                f.train.batch, f.train.epochs, f.train.folds,
                static_cast<unsigned long long>(f.train.seed));
  echo.emplace_back(buf);
  echo.emplace_back(std::string("kernels=") +
                    kernels::backend_name(kernels::active_backend()));
  return echo;
}

int cmd_gen(const SynthConfig& cfg, int embed_dim, const std::string& out_dir) {
  const SynthOutput out = generate_corpus(cfg);
  save_corpus(out.corpus, out_dir + "/corpus.jsonl");
  save_causal_table(out.table, out_dir + "/causal_table.jsonl");
  save_embeddings(generate_embeddings(cfg, embed_dim),
                  out_dir + "/embeddings.txt");
  const CorpusCounts c = out.corpus.counts();
  std::printf("wrote %zu documents (N_Nc=%lld N_Con=%lld N_O=%lld) to %s\n",
              out.corpus.documents.size(),
              static_cast<long long>(c.not_causal),
              static_cast<long long>(c.conditional),
              static_cast<long long>(c.others), out_dir.c_str());
  return 0;
}

int cmd_aggregate(const std::string& raw_path,
                  const std::vector<std::string>& annotator_paths,
                  const std::string& out_path) {
  const std::vector<RawRecord> raw = load_raw_records(raw_path);
  std::vector<std::string> warnings;
  std::vector<Document> docs = duplicate_per_pair(raw, &warnings);
  for (const std::string& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  std::array<std::vector<AnnotatorJudgment>, 3> annos;
  for (int a = 0; a < 3; ++a) annos[a] = load_annotations(annotator_paths[a]);
  std::array<std::unordered_map<std::string, const AnnotatorJudgment*>, 3> by_id;
  for (int a = 0; a < 3; ++a)
    for (const AnnotatorJudgment& j : annos[a]) by_id[a].emplace(j.doc_id, &j);

  std::vector<std::array<AnnotatorJudgment, 3>> triples;
  Corpus corpus;
  for (Document& doc : docs) {
    std::array<AnnotatorJudgment, 3> triple;
    for (int a = 0; a < 3; ++a) {
      auto it = by_id[a].find(doc.id);
      if (it == by_id[a].end())
        throw ValidationError("annotator " + std::to_string(a + 1) +
                              " has no judgment for document " + doc.id);
      triple[a] = *it->second;
    }
    const AggregatedLabels agg = aggregate_annotations(triple);
    doc.y_c = agg.y_c;
    doc.ctx_type = agg.ctx_type;
    validate_document(doc);
    triples.push_back(std::move(triple));
    corpus.documents.push_back(std::move(doc));
  }
  corpus.rebuild_vocab();
  save_corpus(corpus, out_path);
  const CorpusCounts c = corpus.counts();
  std::printf("aggregated %zu documents (N_Nc=%lld N_Con=%lld N_O=%lld)\n",
              corpus.documents.size(), static_cast<long long>(c.not_causal),
              static_cast<long long>(c.conditional),
              static_cast<long long>(c.others));
  std::printf("agreement y_ce=%.4f y_cv=%.4f ctx=%.4f\n",
              agreement_rate(triples, AgreementLabel::y_ce),
              agreement_rate(triples, AgreementLabel::y_cv),
              agreement_rate(triples, AgreementLabel::ctx_type));
  return 0;
}

int cmd_negsample(const std::string& in_path, const std::string& table_path,
                  int n, std::uint64_t seed, const std::string& out_path) {
  const Corpus corpus = load_corpus(in_path);
  const CorpusCounts c = corpus.counts();
  for (const std::string& note :
       plan_notes(c.not_causal, c.conditional, c.others, n))
    std::printf("%s\n", note.c_str());

  BuildOptions opts;
  opts.n = n;
  CausalTable table;
  if (!table_path.empty()) {
    table = load_causal_table(table_path);
    opts = synth_build_options(table, n);
  }
  const Corpus sampled = build_dataset(corpus, opts, RngStream(seed));
  if (!out_path.empty()) save_corpus(sampled, out_path);

  std::int64_t pos = 0, neg = 0;
  for (const Document& d : sampled.documents)
    (derive_targets(d).y == 1 ? pos : neg) += 1;
  const SamplePlan plan = counts_from_n(c.not_causal, c.conditional, c.others, n);
  std::printf("realized: %zu documents, N_pos=%lld N_neg=%lld (plan %lld/%lld)\n",
              sampled.documents.size(), static_cast<long long>(pos),
              static_cast<long long>(neg), static_cast<long long>(plan.n_pos),
              static_cast<long long>(plan.n_neg));
  return 0;
}

int cmd_train(TrainFlags& f) {
  const Corpus corpus = load_corpus(f.corpus_path);
  const EmbeddingTable emb = load_embeddings(f.embeddings_path);
  ModelConfig model_cfg = model_config_from_flags(f, corpus);
  model_cfg.embed_dim = emb.dim;
  f.train.loss_terms = parse_loss_terms(f.loss_terms);
  const std::string label = f.label.empty() ? variant_label(f) : f.label;

  const CvResult cv = run_cv(corpus, model_cfg, f.train, emb, label);
  const RunReport report = make_report({cv.row}, config_echo(f));
  std::fputs(format_report(report).c_str(), stdout);
  if (!f.report_path.empty()) save_report(report, f.report_path);
  if (!f.json_path.empty()) {
    std::ofstream out(f.json_path, std::ios::binary);
    out << report_to_json(report) << "\n";
  }
  if (!f.checkpoint_path.empty())
    save_checkpoint(cv.last_fold_params, f.checkpoint_path);
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& corpus_path,
             const std::string& report_path, const std::string& json_path) {
  ModelParams params = load_checkpoint(checkpoint_path);
  const Corpus corpus = load_corpus(corpus_path);
  std::vector<const Document*> docs;
  for (const Document& d : corpus.documents) docs.push_back(&d);
  const FoldMetrics m = evaluate_docs(params, docs);
  ReportRow row;
  row.label = "eval";
  row.folds.push_back(m);
  const RunReport report =
      make_report({row}, {"checkpoint=" + checkpoint_path});
  std::fputs(format_report(report).c_str(), stdout);
  if (!report_path.empty()) save_report(report, report_path);
  if (!json_path.empty()) {
    std::ofstream out(json_path, std::ios::binary);
    out << report_to_json(report) << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  double worst = 0.0;
  for (EncoderKind enc : {EncoderKind::CC, EncoderKind::BL, EncoderKind::SA}) {
    for (bool cmm : {false, true}) {
      for (bool pam : {false, true}) {
        ModelConfig mc;
        mc.embed_dim = 8;
        mc.hidden = 8;
        mc.encoder = enc;
        mc.use_cmm = cmm;
        mc.use_pam = pam;
        mc.max_clause_len = 5;
        mc.max_context = 4;
        TrainConfig tc;
        const double err = model_grad_check(mc, tc, seed);
        worst = std::max(worst, err);
        std::printf("gradcheck %s cmm=%d pam=%d max_rel_err=%.3e %s\n",
                    to_string(enc), cmm ? 1 : 0, pam ? 1 : 0, err,
                    err < tolerance ? "ok" : "FAIL");
      }
    }
  }
  std::printf("gradcheck worst=%.3e tolerance=%.1e\n", worst, tolerance);
  return worst < tolerance ? 0 : 1;
}

int cmd_gridsearch(TrainFlags& f, std::vector<double> etas,
                   std::vector<double> taus, const std::string& out_path) {
  const Corpus corpus = load_corpus(f.corpus_path);
  const EmbeddingTable emb = load_embeddings(f.embeddings_path);
  ModelConfig model_cfg = model_config_from_flags(f, corpus);
  model_cfg.embed_dim = emb.dim;
  f.train.loss_terms = parse_loss_terms(f.loss_terms);
  if (etas.empty()) etas = {0.01, 0.1, 0.5, 1.0};
  if (taus.empty()) taus = {1.0, 5.0, 10.0, 100.0};
  const std::vector<GridPoint> grid =
      grid_search(corpus, model_cfg, f.train, emb, etas, taus);
  std::ostringstream os;
  os << "eta\ttau\t(F1+gF1)/2\n";
  for (const GridPoint& p : grid) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%g\t%g\t%.4f\n", p.eta, p.tau, p.score);
    os << buf;
  }
  std::fputs(os.str().c_str(), stdout);
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    out << os.str();
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs,
               const std::string& out_path) {
  using ordered_json = nlohmann::ordered_json;
  RunReport merged;
  for (const std::string& path : inputs) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open metrics file: " + path);
    ordered_json j = ordered_json::parse(in);
    for (const auto& row_json : j.at("rows")) {
      ReportRow row;
      row.label = row_json.at("label").get<std::string>();
      for (const auto& fold_json : row_json.at("folds")) {
        FoldMetrics m;
        m.precision = fold_json.at("precision").get<double>();
        m.recall = fold_json.at("recall").get<double>();
        m.f1 = fold_json.at("f1").get<double>();
        if (fold_json.contains("gf1")) {
          m.has_mask = true;
          m.mask.gf1 = fold_json.at("gf1").get<double>();
          m.mask.df1 = fold_json.at("df1").get<double>();
          m.mask.rac_num = fold_json.at("rac_num").get<std::int64_t>();
          m.mask.rac_den = fold_json.at("rac_den").get<std::int64_t>();
          m.mask.acc = fold_json.at("acc").get<double>();
        }
        row.folds.push_back(m);
      }
      merged.rows.push_back(std::move(row));
    }
  }
  const RunReport report = make_report(std::move(merged.rows), {});
  std::fputs(format_report(report).c_str(), stdout);
  if (!out_path.empty()) save_report(report, out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional emotion-cause relationship recognition pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key=value config file");
  app.allow_config_extras(CLI::config_extras_mode::error);

  std::string backend = "auto";
  app.add_option("--kernels", backend,
                 "Arithmetic backend: auto, scalar or avx2")
      ->capture_default_str();

  // gen
  SynthConfig synth_cfg;
  int gen_embed_dim = 32;
  std::string gen_out_dir = ".";
  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  gen->add_option("--n-docs", synth_cfg.n_docs)->capture_default_str();
  gen->add_option("--vocab-size", synth_cfg.vocab_size)->capture_default_str();
  gen->add_option("--clause-len", synth_cfg.clause_len)->capture_default_str();
  gen->add_option("--max-context", synth_cfg.max_context)
      ->capture_default_str();
  gen->add_option("--frac-conditional", synth_cfg.fraction_conditional)
      ->capture_default_str();
  gen->add_option("--frac-missing", synth_cfg.fraction_missing_condition)
      ->capture_default_str();
  gen->add_option("--seed", synth_cfg.seed)->capture_default_str();
  gen->add_option("--embed-dim", gen_embed_dim)->capture_default_str();
  gen->add_option("--out-dir", gen_out_dir)->capture_default_str();

  // aggregate
  std::string agg_raw, agg_out;
  std::vector<std::string> agg_annotators;
  CLI::App* aggregate = app.add_subcommand(
      "aggregate", "Aggregate three annotator files into final labels");
  aggregate->add_option("--raw", agg_raw, "Raw multi-pair records")->required();
  aggregate
      ->add_option("--annotators", agg_annotators,
                   "Three annotator judgment files")
      ->expected(3)
      ->required();
  aggregate->add_option("--out", agg_out, "Output corpus file")->required();

  // negsample
  std::string ns_in, ns_table, ns_out;
  int ns_n = 2;
  std::uint64_t ns_seed = 1;
  CLI::App* negsample =
      app.add_subcommand("negsample", "Generate negative samples");
  negsample->add_option("--in", ns_in, "Input corpus")->required();
  negsample->add_option("--table", ns_table,
                        "Causal table (enables condition-aware donors)");
  negsample->add_option("--n", ns_n, "Samples per type per document")
      ->capture_default_str();
  negsample->add_option("--seed", ns_seed)->capture_default_str();
  negsample->add_option("--out", ns_out, "Output corpus");

  // train
  TrainFlags train_flags;
  CLI::App* train =
      app.add_subcommand("train", "Train with k-fold cross-validation");
  add_train_flags(train, train_flags);
  train->add_option("--label", train_flags.label, "Report row label");
  train->add_option("--report", train_flags.report_path, "Report output file");
  train->add_option("--json", train_flags.json_path, "Metrics JSON output");
  train->add_option("--checkpoint", train_flags.checkpoint_path,
                    "Checkpoint output (last fold)");

  // eval
  std::string eval_checkpoint, eval_corpus, eval_report, eval_json;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
  eval_cmd->add_option("--checkpoint", eval_checkpoint)->required();
  eval_cmd->add_option("--corpus", eval_corpus)->required();
  eval_cmd->add_option("--report", eval_report);
  eval_cmd->add_option("--json", eval_json);

  // gradcheck
  std::uint64_t gc_seed = 1;
  double gc_tolerance = 1e-4;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Check analytic gradients against finite differences");
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();
  gradcheck->add_option("--tolerance", gc_tolerance)->capture_default_str();

  // gridsearch
  TrainFlags grid_flags;
  std::vector<double> grid_etas, grid_taus;
  std::string grid_out;
  CLI::App* gridsearch =
      app.add_subcommand("gridsearch", "Loss-weight grid search");
  add_train_flags(gridsearch, grid_flags);
  gridsearch->add_option("--etas", grid_etas, "Grid of eta values");
  gridsearch->add_option("--taus", grid_taus, "Grid of tau values");
  gridsearch->add_option("--out", grid_out, "Output file");

  // report
  std::vector<std::string> report_inputs;
  std::string report_out;
  CLI::App* report =
      app.add_subcommand("report", "Merge metrics JSON files into one table");
  report->add_option("--inputs", report_inputs)->required();
  report->add_option("--out", report_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (backend == "scalar") kernels::set_backend(kernels::Backend::scalar);
    else if (backend == "avx2") kernels::set_backend(kernels::Backend::avx2);
    else if (backend != "auto")
      throw ValidationError("unknown kernel backend: " + backend);

    if (gen->parsed()) return cmd_gen(synth_cfg, gen_embed_dim, gen_out_dir);
    if (aggregate->parsed()) return cmd_aggregate(agg_raw, agg_annotators, agg_out);
    if (negsample->parsed())
      return cmd_negsample(ns_in, ns_table, ns_n, ns_seed, ns_out);
    if (train->parsed()) return cmd_train(train_flags);
    if (eval_cmd->parsed())
      return cmd_eval(eval_checkpoint, eval_corpus, eval_report, eval_json);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_tolerance);
    if (gridsearch->parsed())
      return cmd_gridsearch(grid_flags, grid_etas, grid_taus, grid_out);
    if (report->parsed()) return cmd_report(report_inputs, report_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
