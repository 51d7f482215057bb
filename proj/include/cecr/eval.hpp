#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cecr {

struct ConfusionCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// 0/0 is defined as 0 throughout.
Prf1 prf1(const ConfusionCounts& counts);

// One scored document for mask evaluation: true mask and predicted
// probabilities over its valid context slots.
struct ScoredMask {
  std::vector<int> truth;
  std::vector<double> probs;
};

struct MaskMetrics {
  double gf1 = 0.0;
  double df1 = 0.0;
  std::int64_t rac_num = 0;  // all-correct documents
  std::int64_t rac_den = 0;  // documents with >= 1 PR clause
  double acc = 0.0;
  double rac() const {
    return rac_den == 0 ? 0.0 : static_cast<double>(rac_num) / rac_den;
  }
  std::string rac_text() const {
    return std::to_string(rac_num) + "/" + std::to_string(rac_den);
  }
};

// gF1/dF1/rAC over documents with PR clauses only; Acc over every valid slot
// of every document. Probabilities binarize at prob >= threshold.
MaskMetrics mask_metrics(const std::vector<ScoredMask>& docs,
                         double threshold = 0.1);

// Metrics for one evaluation run (one fold, or a mean row).
struct FoldMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool has_mask = false;
  MaskMetrics mask;
};

FoldMetrics mean_metrics(const std::vector<FoldMetrics>& folds);

struct ReportRow {
  std::string label;  // e.g. "WE-SA+C+P"
  std::vector<FoldMetrics> folds;
  FoldMetrics mean;
};

struct RunReport {
  std::vector<ReportRow> rows;
  std::vector<std::string> config_echo;
  std::vector<std::string> notes;
};

RunReport make_report(std::vector<ReportRow> rows,
                      std::vector<std::string> config_echo,
                      std::vector<std::string> notes = {});

// Text table mirroring the P/R/F1/gF1/dF1/rAC/Acc column layout; mask
// columns render "-" for rows without mask predictions.
std::string format_report(const RunReport& report);
void save_report(const RunReport& report, const std::string& path);

// Machine-readable per-fold metrics (one JSON object).
std::string report_to_json(const RunReport& report);

}  // namespace cecr
