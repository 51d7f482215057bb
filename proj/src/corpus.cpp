#include "cecr/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cecr {

using ordered_json = nlohmann::ordered_json;

const char* to_string(ContextType t) {
  return t == ContextType::IR ? "IR" : "PR";
}

const char* to_string(Origin o) {
  switch (o) {
    case Origin::original: return "original";
    case Origin::ctx_neg_replace_pr: return "ctx_neg_replace_pr";
    case Origin::ctx_neg_replace_ir: return "ctx_neg_replace_ir";
    case Origin::ctx_neg_replace_all: return "ctx_neg_replace_all";
    case Origin::emo_neg: return "emo_neg";
  }
  return "?";
}

ContextType context_type_from_string(const std::string& s) {
  if (s == "IR") return ContextType::IR;
  if (s == "PR") return ContextType::PR;
  throw ParseError("unknown context type: " + s);
}

Origin origin_from_string(const std::string& s) {
  for (Origin o : {Origin::original, Origin::ctx_neg_replace_pr,
                   Origin::ctx_neg_replace_ir, Origin::ctx_neg_replace_all,
                   Origin::emo_neg})
    if (s == to_string(o)) return o;
  throw ParseError("unknown origin: " + s);
}

std::vector<int> Document::context_indices() const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(clauses.size()); ++i)
    if (is_context(i)) out.push_back(i);
  return out;
}

bool Document::is_context(int clause_idx) const {
  if (clause_idx == emotion_idx) return false;
  return std::find(cause_idx.begin(), cause_idx.end(), clause_idx) ==
         cause_idx.end();
}

void validate_document(const Document& doc) {
  const int n = static_cast<int>(doc.clauses.size());
  if (doc.id.empty()) throw ValidationError("document with empty id");
  if (doc.clauses.empty())
    throw ValidationError("document " + doc.id + ": no clauses");
  for (const Clause& c : doc.clauses)
    if (c.empty()) throw ValidationError("document " + doc.id + ": empty clause");
  if (doc.cause_idx.empty())
    throw ValidationError("document " + doc.id + ": no cause clauses");
  for (int i : doc.cause_idx)
    if (i < 0 || i >= n)
      throw ValidationError("document " + doc.id + ": cause index out of range");
  if (doc.emotion_idx < 0 || doc.emotion_idx >= n)
    throw ValidationError("document " + doc.id + ": emotion index out of range");
  if (std::find(doc.cause_idx.begin(), doc.cause_idx.end(), doc.emotion_idx) !=
      doc.cause_idx.end())
    throw ValidationError("document " + doc.id +
                          ": emotion clause listed as cause clause");
  std::set<int> cause_set(doc.cause_idx.begin(), doc.cause_idx.end());
  if (cause_set.size() != doc.cause_idx.size())
    throw ValidationError("document " + doc.id + ": duplicate cause index");
  if (doc.y_c < 0 || doc.y_c > 2)
    throw ValidationError("document " + doc.id + ": y_c out of range");
  const std::size_t n_context = doc.context_indices().size();
  if (doc.ctx_type.size() != n_context)
    throw ValidationError("document " + doc.id +
                          ": ctx_type length does not match context clauses");
  if (doc.y_c == 1)
    for (ContextType t : doc.ctx_type)
      if (t == ContextType::PR)
        throw ValidationError("document " + doc.id +
                              ": y_c = 1 but a context clause is typed PR");
}

CorpusCounts Corpus::counts() const {
  CorpusCounts c;
  for (const Document& d : documents) {
    if (d.y_c == 1) ++c.not_causal;
    else if (d.y_c == 2) ++c.conditional;
    else ++c.others;
  }
  return c;
}

int Corpus::max_context() const {
  std::size_t m = 0;
  for (const Document& d : documents) m = std::max(m, d.ctx_type.size());
  return static_cast<int>(m);
}

int Corpus::max_causes() const {
  std::size_t m = 0;
  for (const Document& d : documents) m = std::max(m, d.cause_idx.size());
  return static_cast<int>(m);
}

void Corpus::rebuild_vocab() {
  vocab.clear();
  for (const Document& d : documents)
    for (const Clause& c : d.clauses)
      for (const std::string& tok : c)
        vocab.emplace(tok, static_cast<int>(vocab.size()));
}

std::string document_to_line(const Document& doc) {
  ordered_json j;
  j["id"] = doc.id;
  j["clauses"] = doc.clauses;
  j["cause"] = doc.cause_idx;
  j["emotion"] = doc.emotion_idx;
  j["y_c"] = doc.y_c;
  std::vector<std::string> types;
  types.reserve(doc.ctx_type.size());
  for (ContextType t : doc.ctx_type) types.emplace_back(to_string(t));
  j["ctx_type"] = types;
  j["origin"] = to_string(doc.origin);
  j["source_id"] = doc.source_id;
  return j.dump();
}

Document document_from_line(const std::string& line) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad record: ") + e.what());
  }
  try {
    Document doc;
    doc.id = j.at("id").get<std::string>();
    doc.clauses = j.at("clauses").get<std::vector<Clause>>();
    doc.cause_idx = j.at("cause").get<std::vector<int>>();
    doc.emotion_idx = j.at("emotion").get<int>();
    doc.y_c = j.at("y_c").get<int>();
    for (const auto& t : j.at("ctx_type"))
      doc.ctx_type.push_back(context_type_from_string(t.get<std::string>()));
    doc.origin = origin_from_string(j.at("origin").get<std::string>());
    doc.source_id = j.at("source_id").get<std::string>();
    return doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad record: ") + e.what());
  }
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  Corpus corpus;
  std::set<std::string> seen_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Document doc;
    try {
      doc = document_from_line(line);
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    validate_document(doc);
    if (!seen_ids.insert(doc.id).second)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": duplicate document id " + doc.id);
    corpus.documents.push_back(std::move(doc));
  }
  corpus.rebuild_vocab();
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write corpus file: " + path);
  for (const Document& d : corpus.documents) out << document_to_line(d) << "\n";
}

std::vector<RawRecord> load_raw_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open raw record file: " + path);
  std::vector<RawRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ordered_json j = ordered_json::parse(line);
      RawRecord rec;
      rec.id = j.at("id").get<std::string>();
      rec.clauses = j.at("clauses").get<std::vector<Clause>>();
      for (const auto& e : j.at("ecps")) {
        RawEcp ecp;
        ecp.cause = e.at("cause").get<std::vector<int>>();
        ecp.emotion = e.at("emotion").get<int>();
        rec.ecps.push_back(std::move(ecp));
      }
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

std::vector<AnnotatorJudgment> load_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open annotator file: " + path);
  std::vector<AnnotatorJudgment> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ordered_json j = ordered_json::parse(line);
      AnnotatorJudgment a;
      a.doc_id = j.at("doc_id").get<std::string>();
      a.y_ce = j.at("y_ce").get<int>();
      if (!j.at("y_cv").is_null()) a.y_cv = j.at("y_cv").get<int>();
      for (const auto& t : j.at("ctx_type"))
        a.ctx_type.push_back(context_type_from_string(t.get<std::string>()));
      if (a.y_cv.has_value() != (a.y_ce == 1))
        throw ValidationError(path + ":" + std::to_string(line_no) +
                              ": y_cv must be present iff y_ce = 1");
      out.push_back(std::move(a));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_annotations(const std::vector<AnnotatorJudgment>& judgments,
                      const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write annotator file: " + path);
  for (const AnnotatorJudgment& a : judgments) {
    ordered_json j;
    j["doc_id"] = a.doc_id;
    j["y_ce"] = a.y_ce;
    if (a.y_cv) j["y_cv"] = *a.y_cv;
    else j["y_cv"] = nullptr;
    std::vector<std::string> types;
    for (ContextType t : a.ctx_type) types.emplace_back(to_string(t));
    j["ctx_type"] = types;
    out << j.dump() << "\n";
  }
}

std::vector<Document> duplicate_per_pair(const std::vector<RawRecord>& raw,
                                         std::vector<std::string>* warnings) {
  std::vector<Document> out;
  for (const RawRecord& rec : raw) {
    if (rec.ecps.empty()) {
      if (warnings)
        warnings->push_back("record " + rec.id + " has no ECPs, skipped");
      continue;
    }
    for (std::size_t k = 0; k < rec.ecps.size(); ++k) {
      Document doc;
      doc.id = rec.ecps.size() == 1 ? rec.id
                                    : rec.id + "#" + std::to_string(k);
      doc.clauses = rec.clauses;
      doc.cause_idx = rec.ecps[k].cause;
      doc.emotion_idx = rec.ecps[k].emotion;
      doc.y_c = 0;
      doc.ctx_type.assign(doc.context_indices().size(), ContextType::IR);
      doc.origin = Origin::original;
      doc.source_id = rec.id;
      validate_document(doc);
      out.push_back(std::move(doc));
    }
  }
  return out;
}

int majority_vote(const std::array<int, 3>& votes) {
  return (votes[0] + votes[1] + votes[2]) >= 2 ? 1 : 0;
}

AggregatedLabels aggregate_annotations(
    const std::array<AnnotatorJudgment, 3>& judgments) {
  const AnnotatorJudgment& a = judgments[0];
  for (const AnnotatorJudgment& b : judgments) {
    if (b.doc_id != a.doc_id)
      throw ValidationError("aggregation over mismatched doc ids: " + a.doc_id +
                            " vs " + b.doc_id);
    if (b.ctx_type.size() != a.ctx_type.size())
      throw ValidationError("aggregation over mismatched clause counts for " +
                            a.doc_id);
  }
  const int y_ce = majority_vote(
      {judgments[0].y_ce, judgments[1].y_ce, judgments[2].y_ce});
  // Absent y_cv counts as a 0 vote; it only matters when y_ce wins anyway.
  const int y_cv = majority_vote({judgments[0].y_cv.value_or(0),
                                  judgments[1].y_cv.value_or(0),
                                  judgments[2].y_cv.value_or(0)});
  AggregatedLabels out;
  out.y_c = y_ce + y_ce * y_cv;
  out.ctx_type.reserve(a.ctx_type.size());
  for (std::size_t j = 0; j < a.ctx_type.size(); ++j) {
    int pr_votes = 0;
    for (const AnnotatorJudgment& b : judgments)
      pr_votes += b.ctx_type[j] == ContextType::PR ? 1 : 0;
    out.ctx_type.push_back(pr_votes >= 2 ? ContextType::PR : ContextType::IR);
  }
  // A missing-condition document cannot carry PR clauses.
  if (out.y_c == 1)
    for (ContextType& t : out.ctx_type) t = ContextType::IR;
  return out;
}

Targets derive_targets(const Document& doc) {
  Targets t;
  t.y = (doc.y_c == 0 || doc.y_c == 2) ? 1 : 0;
  t.y_o = doc.y_c == 0 ? 1 : 0;
  t.mask.reserve(doc.ctx_type.size());
  for (ContextType ct : doc.ctx_type)
    t.mask.push_back(ct == ContextType::PR ? 1 : 0);
  return t;
}

double agreement_rate(
    const std::vector<std::array<AnnotatorJudgment, 3>>& judgments,
    AgreementLabel label) {
  if (judgments.empty())
    throw ValidationError("agreement_rate over empty input");
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& triple : judgments) {
    int pairs = 0, agree = 0;
    auto tally = [&](int va, int vb) {
      ++pairs;
      agree += va == vb ? 1 : 0;
    };
    switch (label) {
      case AgreementLabel::y_ce:
        for (int i = 0; i < 3; ++i)
          for (int j = i + 1; j < 3; ++j) tally(triple[i].y_ce, triple[j].y_ce);
        break;
      case AgreementLabel::y_cv:
        for (int i = 0; i < 3; ++i)
          for (int j = i + 1; j < 3; ++j)
            if (triple[i].y_cv && triple[j].y_cv)
              tally(*triple[i].y_cv, *triple[j].y_cv);
        break;
      case AgreementLabel::ctx_type:
        for (std::size_t c = 0; c < triple[0].ctx_type.size(); ++c)
          for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j)
              tally(static_cast<int>(triple[i].ctx_type[c]),
                    static_cast<int>(triple[j].ctx_type[c]));
        break;
    }
    if (pairs > 0) {
      total += static_cast<double>(agree) / pairs;
      ++counted;
    }
  }
  if (counted == 0) throw ValidationError("agreement_rate: no comparable pairs");
  return total / counted;
}

int EmbeddingTable::unk_row() const {
  auto it = index.find(kUnkToken);
  if (it == index.end())
    throw ValidationError("embedding table has no " + std::string(kUnkToken) +
                          " row");
  return it->second;
}

int EmbeddingTable::row_of(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? unk_row() : it->second;
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file: " + path);
  EmbeddingTable table;
  std::size_t vocab_size = 0;
  std::string header;
  if (!std::getline(in, header))
    throw ParseError("embedding file is empty: " + path);
  {
    std::istringstream hs(header);
    if (!(hs >> vocab_size >> table.dim) || table.dim <= 0)
      throw ParseError("bad embedding header: " + header);
  }
  table.values.reserve(vocab_size * table.dim);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    for (int k = 0; k < table.dim; ++k) {
      double v;
      if (!(ls >> v))
        throw ParseError("short embedding row for token " + token);
      table.values.push_back(v);
    }
    table.index.emplace(token, static_cast<int>(table.tokens.size()));
    table.tokens.push_back(token);
  }
  if (table.tokens.size() != vocab_size)
    throw ParseError("embedding file declares " + std::to_string(vocab_size) +
                     " rows but has " + std::to_string(table.tokens.size()));
  return table;
}

void save_embeddings(const EmbeddingTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write embedding file: " + path);
  out << table.tokens.size() << " " << table.dim << "\n";
  char buf[64];
  for (std::size_t i = 0; i < table.tokens.size(); ++i) {
    out << table.tokens[i];
    for (int k = 0; k < table.dim; ++k) {
      std::snprintf(buf, sizeof(buf), " %.17g", table.values[i * table.dim + k]);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace cecr
