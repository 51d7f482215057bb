#include "cecr/eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cecr/corpus.hpp"

namespace cecr {

Prf1 prf1(const ConfusionCounts& c) {
  Prf1 out;
  out.precision = (c.tp + c.fp) == 0
                      ? 0.0
                      : static_cast<double>(c.tp) / (c.tp + c.fp);
  out.recall =
      (c.tp + c.fn) == 0 ? 0.0 : static_cast<double>(c.tp) / (c.tp + c.fn);
  out.f1 = (out.precision + out.recall) == 0.0
               ? 0.0
               : 2.0 * out.precision * out.recall /
                     (out.precision + out.recall);
  return out;
}

MaskMetrics mask_metrics(const std::vector<ScoredMask>& docs,
                         double threshold) {
  MaskMetrics m;
  ConfusionCounts global;
  double df1_total = 0.0;
  std::int64_t correct_slots = 0, total_slots = 0;
  for (const ScoredMask& doc : docs) {
    bool has_pr = false;
    for (int t : doc.truth) has_pr = has_pr || t == 1;
    ConfusionCounts local;
    bool all_correct = true;
    for (std::size_t j = 0; j < doc.truth.size(); ++j) {
      const int pred = doc.probs[j] >= threshold ? 1 : 0;
      const int truth = doc.truth[j];
      ++total_slots;
      if (pred == truth) ++correct_slots;
      else all_correct = false;
      if (has_pr) {
        if (pred == 1 && truth == 1) ++local.tp;
        else if (pred == 1 && truth == 0) ++local.fp;
        else if (pred == 0 && truth == 1) ++local.fn;
        else ++local.tn;
      }
    }
    if (has_pr) {
      global.tp += local.tp;
      global.fp += local.fp;
      global.fn += local.fn;
      global.tn += local.tn;
      df1_total += prf1(local).f1;
      ++m.rac_den;
      if (all_correct) ++m.rac_num;
    }
  }
  m.gf1 = prf1(global).f1;
  m.df1 = m.rac_den == 0 ? 0.0 : df1_total / m.rac_den;
  m.acc = total_slots == 0 ? 0.0
                           : static_cast<double>(correct_slots) / total_slots;
  return m;
}

FoldMetrics mean_metrics(const std::vector<FoldMetrics>& folds) {
  FoldMetrics m;
  if (folds.empty()) return m;
  std::int64_t rac_num = 0, rac_den = 0;
  int with_mask = 0;
  for (const FoldMetrics& f : folds) {
    m.precision += f.precision;
    m.recall += f.recall;
    m.f1 += f.f1;
    if (f.has_mask) {
      ++with_mask;
      m.mask.gf1 += f.mask.gf1;
      m.mask.df1 += f.mask.df1;
      m.mask.acc += f.mask.acc;
      rac_num += f.mask.rac_num;
      rac_den += f.mask.rac_den;
    }
  }
  const double n = static_cast<double>(folds.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  if (with_mask > 0) {
    m.has_mask = true;
    m.mask.gf1 /= with_mask;
    m.mask.df1 /= with_mask;
    m.mask.acc /= with_mask;
    m.mask.rac_num = rac_num;
    m.mask.rac_den = rac_den;
  }
  return m;
}

RunReport make_report(std::vector<ReportRow> rows,
                      std::vector<std::string> config_echo,
                      std::vector<std::string> notes) {
  if (rows.empty()) throw ValidationError("report needs at least one row");
  for (ReportRow& row : rows) {
    if (row.folds.empty())
      throw ValidationError("report row " + row.label + " has no folds");
    row.mean = mean_metrics(row.folds);
  }
  RunReport report;
  report.rows = std::move(rows);
  report.config_echo = std::move(config_echo);
  report.notes = std::move(notes);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void format_metric_line(std::ostringstream& os, const std::string& label,
                        const FoldMetrics& m) {
  os << label << "\t" << fmt(m.precision) << "\t" << fmt(m.recall) << "\t"
     << fmt(m.f1) << "\t";
  if (m.has_mask) {
    os << fmt(m.mask.gf1) << "\t" << fmt(m.mask.df1) << "\t"
       << m.mask.rac_text() << "\t" << fmt(m.mask.acc);
  } else {
    os << "-\t-\t-\t-";
  }
  os << "\n";
}

}  // namespace

std::string format_report(const RunReport& report) {
  std::ostringstream os;
  for (const std::string& line : report.config_echo) os << "# " << line << "\n";
  os << "row\tP\tR\tF1\tgF1\tdF1\trAC\tAcc\n";
  for (const ReportRow& row : report.rows) {
    for (std::size_t f = 0; f < row.folds.size(); ++f)
      format_metric_line(os, row.label + "/fold" + std::to_string(f),
                         row.folds[f]);
    format_metric_line(os, row.label + "/mean", row.mean);
  }
  for (const std::string& note : report.notes) os << "# " << note << "\n";
  return os.str();
}

void save_report(const RunReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write report: " + path);
  out << format_report(report);
}

std::string report_to_json(const RunReport& report) {
  using ordered_json = nlohmann::ordered_json;
  auto metrics_json = [](const FoldMetrics& m) {
    ordered_json j;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    if (m.has_mask) {
      j["gf1"] = m.mask.gf1;
      j["df1"] = m.mask.df1;
      j["rac_num"] = m.mask.rac_num;
      j["rac_den"] = m.mask.rac_den;
      j["acc"] = m.mask.acc;
    }
    return j;
  };
  ordered_json j;
  j["config"] = report.config_echo;
  j["rows"] = ordered_json::array();
  for (const ReportRow& row : report.rows) {
    ordered_json r;
    r["label"] = row.label;
    r["folds"] = ordered_json::array();
    for (const FoldMetrics& f : row.folds) r["folds"].push_back(metrics_json(f));
    r["mean"] = metrics_json(row.mean);
    j["rows"].push_back(std::move(r));
  }
  j["notes"] = report.notes;
  return j.dump(2);
}

}  // namespace cecr
