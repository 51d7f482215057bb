#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "cecr/eval.hpp"
#include "cecr/rng.hpp"

using namespace cecr;

namespace {

// Independent brute-force reference for mask_metrics.
MaskMetrics reference_mask_metrics(const std::vector<ScoredMask>& docs,
                                   double threshold) {
  MaskMetrics out;
  std::int64_t g_tp = 0, g_fp = 0, g_fn = 0;
  double df1_sum = 0.0;
  std::int64_t slot_correct = 0, slot_total = 0;
  for (const ScoredMask& d : docs) {
    const bool has_pr =
        std::count(d.truth.begin(), d.truth.end(), 1) > 0;
    std::int64_t tp = 0, fp = 0, fn = 0;
    bool all_ok = true;
    for (std::size_t i = 0; i < d.truth.size(); ++i) {
      const int pred = d.probs[i] >= threshold ? 1 : 0;
      slot_total += 1;
      if (pred == d.truth[i]) slot_correct += 1;
      else all_ok = false;
      if (pred == 1 && d.truth[i] == 1) tp += 1;
      if (pred == 1 && d.truth[i] == 0) fp += 1;
      if (pred == 0 && d.truth[i] == 1) fn += 1;
    }
    if (has_pr) {
      g_tp += tp;
      g_fp += fp;
      g_fn += fn;
      const double p = tp + fp == 0 ? 0.0 : (double)tp / (tp + fp);
      const double r = tp + fn == 0 ? 0.0 : (double)tp / (tp + fn);
      df1_sum += p + r == 0 ? 0.0 : 2 * p * r / (p + r);
      out.rac_den += 1;
      if (all_ok) out.rac_num += 1;
    }
  }
  const double gp = g_tp + g_fp == 0 ? 0.0 : (double)g_tp / (g_tp + g_fp);
  const double gr = g_tp + g_fn == 0 ? 0.0 : (double)g_tp / (g_tp + g_fn);
  out.gf1 = gp + gr == 0 ? 0.0 : 2 * gp * gr / (gp + gr);
  out.df1 = out.rac_den == 0 ? 0.0 : df1_sum / out.rac_den;
  out.acc = slot_total == 0 ? 0.0 : (double)slot_correct / slot_total;
  return out;
}

}  // namespace

TEST_CASE("prf1 on hand examples") {
  Prf1 m = prf1({5, 0, 0, 5});
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);

  m = prf1({2, 1, 1, 0});
  CHECK(m.precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.recall == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1 == doctest::Approx(2.0 / 3.0));

  m = prf1({0, 0, 5, 0});
  CHECK(m.precision == 0.0);
  CHECK(m.recall == 0.0);
  CHECK(m.f1 == 0.0);
}

TEST_CASE("worked mask-metric example reproduces to 1e-12") {
  const std::vector<ScoredMask> docs = {
      {{1, 0, 0}, {0.4, 0.05, 0.2}},
      {{0, 1}, {0.05, 0.5}},
      {{0, 0}, {0.0, 0.0}},
  };
  const MaskMetrics m = mask_metrics(docs, 0.1);
  CHECK(std::abs(m.gf1 - 0.8) < 1e-12);
  CHECK(std::abs(m.df1 - (2.0 / 3.0 + 1.0) / 2.0) < 1e-12);
  CHECK(m.rac_num == 1);
  CHECK(m.rac_den == 2);
  CHECK(m.rac_text() == "1/2");
  CHECK(std::abs(m.acc - 6.0 / 7.0) < 1e-12);
}

TEST_CASE("degenerate predictors") {
  const std::vector<ScoredMask> zeros = {{{1, 0}, {0.0, 0.0}},
                                         {{0, 1, 1}, {0.0, 0.0, 0.0}}};
  const MaskMetrics m = mask_metrics(zeros, 0.1);
  CHECK(m.gf1 == 0.0);
  CHECK(m.acc == doctest::Approx(2.0 / 5.0));  // true-zero slots
  CHECK(m.rac_num == 0);

  const std::vector<ScoredMask> perfect = {{{1, 0}, {0.9, 0.0}},
                                           {{0, 1}, {0.05, 0.99}}};
  const MaskMetrics p = mask_metrics(perfect, 0.1);
  CHECK(p.gf1 == 1.0);
  CHECK(p.df1 == 1.0);
  CHECK(p.acc == 1.0);
  CHECK(p.rac_num == p.rac_den);
}

TEST_CASE("mask metrics match the brute-force reference on random corpora") {
  RngStream rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<ScoredMask> docs(1 + rng.next_below(6));
    for (ScoredMask& d : docs) {
      const std::size_t slots = 1 + rng.next_below(5);
      for (std::size_t i = 0; i < slots; ++i) {
        d.truth.push_back(rng.bernoulli(0.4) ? 1 : 0);
        d.probs.push_back(rng.uniform(0.0, 1.0));
      }
    }
    const double threshold = rng.uniform(0.05, 0.95);
    const MaskMetrics a = mask_metrics(docs, threshold);
    const MaskMetrics b = reference_mask_metrics(docs, threshold);
    CHECK(a.gf1 == b.gf1);
    CHECK(a.df1 == b.df1);
    CHECK(a.rac_num == b.rac_num);
    CHECK(a.rac_den == b.rac_den);
    CHECK(a.acc == b.acc);
  }
}

TEST_CASE("metrics are invariant to document order") {
  std::vector<ScoredMask> docs = {
      {{1, 0, 0}, {0.4, 0.05, 0.2}},
      {{0, 1}, {0.05, 0.5}},
      {{0, 0}, {0.0, 0.0}},
  };
  const MaskMetrics ref = mask_metrics(docs, 0.1);
  std::reverse(docs.begin(), docs.end());
  const MaskMetrics rev = mask_metrics(docs, 0.1);
  CHECK(ref.gf1 == rev.gf1);
  CHECK(ref.df1 == rev.df1);
  CHECK(ref.acc == rev.acc);
}

TEST_CASE("raising the threshold never increases predicted positives") {
  RngStream rng(5);
  std::vector<ScoredMask> docs(10);
  for (ScoredMask& d : docs)
    for (int i = 0; i < 4; ++i) {
      d.truth.push_back(rng.bernoulli(0.5) ? 1 : 0);
      d.probs.push_back(rng.uniform(0.0, 1.0));
    }
  auto positives = [&](double t) {
    std::int64_t n = 0;
    for (const ScoredMask& d : docs)
      for (double p : d.probs) n += p >= t ? 1 : 0;
    return n;
  };
  std::int64_t prev = positives(0.0);
  for (double t = 0.1; t <= 1.01; t += 0.1) {
    const std::int64_t cur = positives(t);
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("mean row aggregates folds, rAC as summed counts") {
  FoldMetrics f1;
  f1.precision = 0.8;
  f1.recall = 0.6;
  f1.f1 = 0.685;
  f1.has_mask = true;
  f1.mask.gf1 = 0.5;
  f1.mask.rac_num = 3;
  f1.mask.rac_den = 10;
  FoldMetrics f2 = f1;
  f2.f1 = 0.7;
  f2.mask.gf1 = 0.7;
  f2.mask.rac_num = 5;
  f2.mask.rac_den = 10;
  const FoldMetrics m = mean_metrics({f1, f2});
  CHECK(m.f1 == doctest::Approx((0.685 + 0.7) / 2).epsilon(1e-12));
  CHECK(m.mask.gf1 == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(m.mask.rac_num == 8);
  CHECK(m.mask.rac_den == 20);

  const FoldMetrics single = mean_metrics({f1});
  CHECK(single.f1 == f1.f1);
  CHECK(single.mask.gf1 == f1.mask.gf1);
}

TEST_CASE("report renders dashes for rows without mask metrics") {
  ReportRow with;
  with.label = "WE-SA+C+P";
  FoldMetrics fm;
  fm.precision = fm.recall = fm.f1 = 0.5;
  fm.has_mask = true;
  fm.mask.gf1 = 0.4;
  fm.mask.rac_num = 1;
  fm.mask.rac_den = 2;
  with.folds = {fm};

  ReportRow without;
  without.label = "WE-CC";
  FoldMetrics bare;
  bare.precision = bare.recall = bare.f1 = 0.6;
  without.folds = {bare};

  const RunReport r = make_report({with, without}, {"setting=1"});
  const std::string text = format_report(r);
  CHECK(text.find("WE-SA+C+P") != std::string::npos);
  CHECK(text.find("WE-CC") != std::string::npos);
  CHECK(text.find("1/2") != std::string::npos);
  CHECK(text.find('-') != std::string::npos);
  CHECK(text.find("# setting=1") != std::string::npos);
  for (const char* col : {"P", "R", "F1", "gF1", "dF1", "rAC", "Acc"})
    CHECK(text.find(col) != std::string::npos);

  const std::string json = report_to_json(r);
  CHECK(json.find("\"gf1\"") != std::string::npos);
  CHECK(json.find("\"rows\"") != std::string::npos);
}
