#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cecr/corpus.hpp"
#include "cecr/rng.hpp"

namespace cecr {

struct SampleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sample counts after generating n context-type and n emotion-type samples
// per eligible document:
//   N_V   = N_Con + N_O
//   N_pos = N_V + N_Con*(n - floor(n/2)) + N_O*n
//   N_neg = N_Nc + N_V*n + N_Con*(n + floor(n/2))
struct SamplePlan {
  int n = 0;
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
  double ratio() const {
    return n_neg == 0 ? 0.0 : static_cast<double>(n_pos) / n_neg;
  }
};

SamplePlan counts_from_n(std::int64_t n_nc, std::int64_t n_con,
                         std::int64_t n_o, int n);

// Advisory n: argmin over n in [1, n_max] of |N_pos/N_neg - 1|, ties toward
// smaller n.
int solve_n(std::int64_t n_nc, std::int64_t n_con, std::int64_t n_o, int n_max);

// Human-readable notes about a plan, including the known discrepancy between
// formula totals and the totals published for the reference dataset.
std::vector<std::string> plan_notes(std::int64_t n_nc, std::int64_t n_con,
                                    std::int64_t n_o, int n);

enum class ReplaceMode { replace_pr, replace_ir, replace_all };

// Maps a document to its emotion category; two documents whose tags differ
// are treated as carrying different emotions. The default looks for an
// "em<digits>" token in the emotion clause and falls back to the clause text.
using EmotionTagFn = std::function<std::string(const Document&)>;
std::string default_emotion_tag(const Document& doc);

// Context-type negative sample. Replacement clauses are drawn uniformly from
// context clauses of donor documents with a different source_id. Donor
// clauses containing any token in avoid_tokens are skipped, which keeps a
// recipient's own condition marker from being re-inserted.
Document make_context_negative(const Document& doc, const Corpus& donors,
                               ReplaceMode mode, RngStream& rng,
                               const std::vector<std::string>& avoid_tokens = {});

Document make_emotion_negative(const Document& doc, const Corpus& donors,
                               RngStream& rng,
                               const EmotionTagFn& tag = default_emotion_tag);

// Same transformation, but the replacement emotion clause is drawn from an
// explicit pool instead of other documents. Candidates whose tag equals the
// recipient's are rejected.
Document make_emotion_negative(const Document& doc,
                               const std::vector<Clause>& donor_pool,
                               RngStream& rng,
                               const EmotionTagFn& tag = default_emotion_tag);

struct BuildOptions {
  int n = 2;
  // Tokens whose presence in a donor clause disqualifies it for a given
  // recipient; keyed by recipient document id. Used to keep planted
  // condition markers out of replacement context.
  std::function<std::vector<std::string>(const Document&)> avoid_tokens;
  EmotionTagFn emotion_tag = default_emotion_tag;
  // When non-empty, emotion-type samples replace the emotion clause with an
  // entry from this pool instead of an emotion clause from another document.
  // This guarantees the replacement really breaks the relationship when the
  // corpus only contains emotions that are causal for every event.
  std::vector<Clause> emotion_donors;
};

// All originals plus generated samples. Conditional documents (y_c = 2) get
// (n - floor(n/2)) replace-IR and (n + floor(n/2)) replace-PR samples;
// Others (y_c = 0) get n replace-all samples; both get n emotion-type
// samples. Not-causal documents (y_c = 1) get none. Deterministic per seed.
Corpus build_dataset(const Corpus& corpus, const BuildOptions& opts,
                     RngStream rng);

}  // namespace cecr
