#include "cecr/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace cecr {

SamplePlan counts_from_n(std::int64_t n_nc, std::int64_t n_con,
                         std::int64_t n_o, int n) {
  const std::int64_t n_v = n_con + n_o;
  const std::int64_t half = n / 2;
  SamplePlan plan;
  plan.n = n;
  plan.n_pos = n_v + n_con * (n - half) + n_o * n;
  plan.n_neg = n_nc + n_v * n + n_con * (n + half);
  return plan;
}

int solve_n(std::int64_t n_nc, std::int64_t n_con, std::int64_t n_o,
            int n_max) {
  int best = 1;
  double best_dev = std::numeric_limits<double>::infinity();
  for (int n = 1; n <= n_max; ++n) {
    const SamplePlan p = counts_from_n(n_nc, n_con, n_o, n);
    const double dev = p.n_neg == 0 ? std::numeric_limits<double>::infinity()
                                    : std::abs(p.ratio() - 1.0);
    if (dev < best_dev) {
      best_dev = dev;
      best = n;
    }
  }
  return best;
}

std::vector<std::string> plan_notes(std::int64_t n_nc, std::int64_t n_con,
                                    std::int64_t n_o, int n) {
  std::vector<std::string> notes;
  char buf[256];
  const SamplePlan p = counts_from_n(n_nc, n_con, n_o, n);
  std::snprintf(buf, sizeof(buf),
                "plan: n=%d -> N_pos=%lld N_neg=%lld ratio=%.4f", n,
                static_cast<long long>(p.n_pos),
                static_cast<long long>(p.n_neg), p.ratio());
  notes.emplace_back(buf);
  const int advisory = solve_n(n_nc, n_con, n_o, 10);
  std::snprintf(buf, sizeof(buf),
                "advisory: n=%d minimizes |N_pos/N_neg - 1| over n in [1,10]",
                advisory);
  notes.emplace_back(buf);
  // The reference dataset (146/763/1176) was published with totals 5554/5415
  // for n=2 and 7743/7668 for n=3; the count formulas above do not reproduce
  // those totals. The formula result is authoritative here.
  if (n_nc == 146 && n_con == 763 && n_o == 1176) {
    const std::int64_t pub_pos = n == 2 ? 5554 : (n == 3 ? 7743 : -1);
    const std::int64_t pub_neg = n == 2 ? 5415 : (n == 3 ? 7668 : -1);
    if (pub_pos > 0 && (pub_pos != p.n_pos || pub_neg != p.n_neg)) {
      std::snprintf(buf, sizeof(buf),
                    "warning: formula totals (%lld, %lld) differ from the "
                    "published totals (%lld, %lld) for the reference dataset "
                    "counts; the formula result is used",
                    static_cast<long long>(p.n_pos),
                    static_cast<long long>(p.n_neg),
                    static_cast<long long>(pub_pos),
                    static_cast<long long>(pub_neg));
      notes.emplace_back(buf);
    }
  }
  return notes;
}

std::string default_emotion_tag(const Document& doc) {
  const Clause& emo = doc.clauses.at(doc.emotion_idx);
  for (const std::string& tok : emo) {
    if (tok.size() > 2 && tok[0] == 'e' && tok[1] == 'm' &&
        std::all_of(tok.begin() + 2, tok.end(),
                    [](unsigned char c) { return std::isdigit(c); }))
      return tok;
  }
  std::string joined;
  for (const std::string& tok : emo) {
    if (!joined.empty()) joined += ' ';
    joined += tok;
  }
  return joined;
}

namespace {

struct DonorClause {
  const Clause* clause;
  const std::string* source_id;
};

std::vector<DonorClause> donor_context_pool(const Corpus& donors,
                                            const std::string& exclude_source) {
  std::vector<DonorClause> pool;
  for (const Document& d : donors.documents) {
    if (d.source_id == exclude_source) continue;
    for (int idx : d.context_indices())
      pool.push_back({&d.clauses[idx], &d.source_id});
  }
  return pool;
}

bool contains_any(const Clause& clause,
                  const std::vector<std::string>& tokens) {
  for (const std::string& tok : clause)
    if (std::find(tokens.begin(), tokens.end(), tok) != tokens.end())
      return true;
  return false;
}

Clause draw_donor_clause(const std::vector<DonorClause>& pool, RngStream& rng,
                         const std::vector<std::string>& avoid_tokens) {
  // Rejection sampling over the pool; bail out if nothing qualifies.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const DonorClause& cand = pool[rng.next_below(pool.size())];
    if (!avoid_tokens.empty() && contains_any(*cand.clause, avoid_tokens))
      continue;
    return *cand.clause;
  }
  throw SampleError("no admissible donor context clause found");
}

}  // namespace

Document make_context_negative(const Document& doc, const Corpus& donors,
                               ReplaceMode mode, RngStream& rng,
                               const std::vector<std::string>& avoid_tokens) {
  if (mode == ReplaceMode::replace_all) {
    if (doc.y_c != 0)
      throw SampleError("replace_all requires y_c = 0, document " + doc.id);
  } else if (doc.y_c != 2) {
    throw SampleError("replace_pr/replace_ir require y_c = 2, document " +
                      doc.id);
  }
  const std::vector<DonorClause> pool =
      donor_context_pool(donors, doc.source_id);
  if (pool.empty())
    throw SampleError("empty donor pool for document " + doc.id);

  Document out = doc;
  out.source_id = doc.id;
  const std::vector<int> ctx = doc.context_indices();
  for (std::size_t j = 0; j < ctx.size(); ++j) {
    const bool is_pr = doc.ctx_type[j] == ContextType::PR;
    const bool replace = mode == ReplaceMode::replace_all ||
                         (mode == ReplaceMode::replace_pr && is_pr) ||
                         (mode == ReplaceMode::replace_ir && !is_pr);
    if (replace) out.clauses[ctx[j]] = draw_donor_clause(pool, rng, avoid_tokens);
  }
  switch (mode) {
    case ReplaceMode::replace_pr:
      out.y_c = 1;
      std::fill(out.ctx_type.begin(), out.ctx_type.end(), ContextType::IR);
      out.origin = Origin::ctx_neg_replace_pr;
      break;
    case ReplaceMode::replace_ir:
      out.origin = Origin::ctx_neg_replace_ir;
      break;
    case ReplaceMode::replace_all:
      out.origin = Origin::ctx_neg_replace_all;
      break;
  }
  return out;
}

namespace {

Document swap_emotion_clause(const Document& doc, const Clause& emotion) {
  Document out = doc;
  out.clauses[doc.emotion_idx] = emotion;
  out.y_c = 1;
  std::fill(out.ctx_type.begin(), out.ctx_type.end(), ContextType::IR);
  out.origin = Origin::emo_neg;
  out.source_id = doc.id;
  return out;
}

void require_emotion_eligible(const Document& doc) {
  if (doc.y_c != 0 && doc.y_c != 2)
    throw SampleError("emotion-type sample requires y_c in {0,2}, document " +
                      doc.id);
}

}  // namespace

Document make_emotion_negative(const Document& doc, const Corpus& donors,
                               RngStream& rng, const EmotionTagFn& tag) {
  require_emotion_eligible(doc);
  const std::string own_tag = tag(doc);
  std::vector<const Clause*> pool;
  for (const Document& d : donors.documents) {
    if (d.source_id == doc.source_id) continue;
    if (tag(d) == own_tag) continue;
    pool.push_back(&d.clauses[d.emotion_idx]);
  }
  if (pool.empty())
    throw SampleError("no donor with a different emotion for document " +
                      doc.id);
  return swap_emotion_clause(doc, *pool[rng.next_below(pool.size())]);
}

Document make_emotion_negative(const Document& doc,
                               const std::vector<Clause>& donor_pool,
                               RngStream& rng, const EmotionTagFn& tag) {
  require_emotion_eligible(doc);
  if (donor_pool.empty())
    throw SampleError("empty emotion donor pool for document " + doc.id);
  const std::string own_tag = tag(doc);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Document out =
        swap_emotion_clause(doc, donor_pool[rng.next_below(donor_pool.size())]);
    if (tag(out) != own_tag) return out;
  }
  throw SampleError("no donor with a different emotion for document " + doc.id);
}

Corpus build_dataset(const Corpus& corpus, const BuildOptions& opts,
                     RngStream rng) {
  Corpus out;
  out.documents = corpus.documents;
  const int half = opts.n / 2;
  auto push = [&](Document doc, const char* kind, int k) {
    doc.id = doc.source_id + ":" + kind + std::to_string(k);
    validate_document(doc);
    out.documents.push_back(std::move(doc));
  };
  auto fnv1a = [](const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
    return h;
  };
  for (const Document& doc : corpus.documents) {
    if (doc.y_c == 1) continue;  // Not-causal documents are never expanded
    RngStream doc_rng = rng.split(fnv1a(doc.id));
    const std::vector<std::string> avoid =
        opts.avoid_tokens ? opts.avoid_tokens(doc) : std::vector<std::string>{};
    if (doc.y_c == 2) {
      for (int k = 0; k < opts.n - half; ++k)
        push(make_context_negative(doc, corpus, ReplaceMode::replace_ir,
                                   doc_rng, avoid),
             "ir", k);
      for (int k = 0; k < opts.n + half; ++k)
        push(make_context_negative(doc, corpus, ReplaceMode::replace_pr,
                                   doc_rng, avoid),
             "pr", k);
    } else {
      for (int k = 0; k < opts.n; ++k)
        push(make_context_negative(doc, corpus, ReplaceMode::replace_all,
                                   doc_rng, avoid),
             "all", k);
    }
    for (int k = 0; k < opts.n; ++k) {
      Document neg =
          opts.emotion_donors.empty()
              ? make_emotion_negative(doc, corpus, doc_rng, opts.emotion_tag)
              : make_emotion_negative(doc, opts.emotion_donors, doc_rng,
                                      opts.emotion_tag);
      push(std::move(neg), "emo", k);
    }
  }
  out.rebuild_vocab();
  return out;
}

}  // namespace cecr
