#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace cecr {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Clause = std::vector<std::string>;  // ordered tokens, non-empty

enum class ContextType { IR, PR };

enum class Origin {
  original,
  ctx_neg_replace_pr,
  ctx_neg_replace_ir,
  ctx_neg_replace_all,
  emo_neg,
};

const char* to_string(ContextType t);
const char* to_string(Origin o);
ContextType context_type_from_string(const std::string& s);
Origin origin_from_string(const std::string& s);

// One document holding exactly one emotion-cause pair. ctx_type is aligned
// to the context clauses (all clauses not in cause_idx and not emotion_idx)
// in document order.
struct Document {
  std::string id;
  std::vector<Clause> clauses;
  std::vector<int> cause_idx;
  int emotion_idx = -1;
  int y_c = 0;  // 0 non-conditional, 1 conditional w/o condition, 2 with
  std::vector<ContextType> ctx_type;
  Origin origin = Origin::original;
  std::string source_id;

  // Indices of context clauses in document order.
  std::vector<int> context_indices() const;
  bool is_context(int clause_idx) const;
};

// Training targets, recomputed from (y_c, ctx_type) and never stored.
struct Targets {
  int y = 0;    // causal relationship label
  int y_o = 0;  // no-context label; y_o = 1 implies y = 1
  std::vector<int> mask;  // one entry per context clause, 1 = PR
};

struct AnnotatorJudgment {
  std::string doc_id;
  int y_ce = 0;
  std::optional<int> y_cv;  // present iff y_ce = 1
  std::vector<ContextType> ctx_type;
};

// (N_Nc, N_Con, N_O): counts of documents with y_c = 1, 2, 0.
struct CorpusCounts {
  std::int64_t not_causal = 0;
  std::int64_t conditional = 0;
  std::int64_t others = 0;
  bool operator==(const CorpusCounts&) const = default;
};

struct Corpus {
  std::vector<Document> documents;
  std::unordered_map<std::string, int> vocab;  // token -> id, ingest order

  CorpusCounts counts() const;
  // Maximum context-clause count over documents (L).
  int max_context() const;
  // Maximum cause-clause count over documents.
  int max_causes() const;
  void rebuild_vocab();
};

// Raw multi-pair record, before per-pair duplication.
struct RawEcp {
  std::vector<int> cause;
  int emotion = -1;
};
struct RawRecord {
  std::string id;
  std::vector<Clause> clauses;
  std::vector<RawEcp> ecps;
};

void validate_document(const Document& doc);

Corpus load_corpus(const std::string& path);
void save_corpus(const Corpus& corpus, const std::string& path);
std::string document_to_line(const Document& doc);
Document document_from_line(const std::string& line);

std::vector<RawRecord> load_raw_records(const std::string& path);
std::vector<AnnotatorJudgment> load_annotations(const std::string& path);
void save_annotations(const std::vector<AnnotatorJudgment>& judgments,
                      const std::string& path);

// One output document per (record, ECP); duplicated documents get ids
// "<id>#<k>" and source_id = record id. Records with zero ECPs are skipped
// (reported through the optional warning sink).
std::vector<Document> duplicate_per_pair(
    const std::vector<RawRecord>& raw,
    std::vector<std::string>* warnings = nullptr);

int majority_vote(const std::array<int, 3>& votes);

struct AggregatedLabels {
  int y_c = 0;
  std::vector<ContextType> ctx_type;
};

AggregatedLabels aggregate_annotations(
    const std::array<AnnotatorJudgment, 3>& judgments);

Targets derive_targets(const Document& doc);

enum class AgreementLabel { y_ce, y_cv, ctx_type };

// Mean over documents of the pairwise agreement among the three annotators.
double agreement_rate(
    const std::vector<std::array<AnnotatorJudgment, 3>>& judgments,
    AgreementLabel label);

// Word-embedding file: "V d" header then one "token v1 .. vd" line per token.
struct EmbeddingTable {
  int dim = 0;
  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;
  std::vector<double> values;  // row-major, tokens.size() x dim

  int row_of(const std::string& token) const;  // UNK row if unknown
  int unk_row() const;
};

inline constexpr const char* kUnkToken = "<UNK>";

EmbeddingTable load_embeddings(const std::string& path);
void save_embeddings(const EmbeddingTable& table, const std::string& path);

}  // namespace cecr
