#include "cecr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace cecr {

using ordered_json = nlohmann::ordered_json;

namespace {

// Fixed pool sizes; rejected when the vocabulary cannot host them.
struct Pools {
  int n_events;      // event tokens that are causal without a condition
  int n_cond_events; // event tokens that are causal only under a condition
  int n_emotions;    // emotion tokens that are causal with every event
  int n_inert;       // emotion tokens that are causal with no event
  int n_conditions;  // condition tokens
  int n_fillers;
};

Pools make_pools(const SynthConfig& cfg) {
  Pools p;
  p.n_emotions = 8;
  p.n_inert = 6;
  p.n_conditions = 6;
  p.n_events = 20;
  p.n_cond_events = 20;
  const int reserved = p.n_events + p.n_cond_events + p.n_emotions +
                       p.n_inert + p.n_conditions;
  p.n_fillers = cfg.vocab_size - reserved;
  if (p.n_fillers < 20)
    throw ConfigError("vocab_size " + std::to_string(cfg.vocab_size) +
                      " too small to host disjoint token roles (need >= " +
                      std::to_string(reserved + 20) + ")");
  return p;
}

std::string ev_tok(int i) { return "ev" + std::to_string(i); }
std::string em_tok(int i) { return "em" + std::to_string(i); }
std::string cond_tok(int i) { return "cond" + std::to_string(i); }
std::string w_tok(int i) { return "w" + std::to_string(i); }

// Product structure: a non-conditional event is causal with every causal
// emotion, a conditional event is causal with every causal emotion under one
// event-specific condition, and inert emotions are causal with nothing. Each
// label is then a function of per-clause token classes, which a model that
// encodes cause, emotion and context clauses separately can represent.
CausalTable make_table(const Pools& p) {
  CausalTable t;
  for (int i = 0; i < p.n_events; ++i)
    for (int j = 0; j < p.n_emotions; ++j)
      t.pairs[{ev_tok(i), em_tok(j)}] = true;
  for (int i = 0; i < p.n_cond_events; ++i)
    for (int j = 0; j < p.n_emotions; ++j)
      t.conditional_pairs[{ev_tok(p.n_events + i), em_tok(j)}] =
          cond_tok(i % p.n_conditions);
  for (int k = 0; k < p.n_inert; ++k)
    t.inert_emotions.push_back(em_tok(p.n_emotions + k));
  return t;
}

// Irrelevant context clause. With some probability it carries a decoy -- a
// causal emotion or event token that is meaningless outside the cause and
// emotion clauses -- so that ungated context genuinely misleads a model
// while a context gate can learn to suppress it. Labels never depend on
// decoys: the content oracle only reads the cause and emotion clauses.
Clause filler_clause(const Pools& p, int max_len, RngStream& rng) {
  const int len = 1 + static_cast<int>(rng.next_below(max_len));
  Clause c;
  for (int k = 0; k < len; ++k)
    c.push_back(w_tok(static_cast<int>(rng.next_below(p.n_fillers))));
  if (rng.bernoulli(0.7)) {
    const int r = static_cast<int>(rng.next_below(p.n_emotions + p.n_events));
    c[rng.next_below(c.size())] =
        r < p.n_emotions ? em_tok(r) : ev_tok(r - p.n_emotions);
  }
  return c;
}

// Clause carrying one role token; filler padding after it.
Clause role_clause(const std::string& role, const Pools& p, int max_len,
                   RngStream& rng) {
  Clause c{role};
  const int extra = static_cast<int>(rng.next_below(max_len));
  for (int k = 0; k < extra; ++k)
    c.push_back(w_tok(static_cast<int>(rng.next_below(p.n_fillers))));
  return c;
}

}  // namespace

std::string CausalTable::condition_for(const std::string& event,
                                       const std::string& emotion) const {
  auto it = conditional_pairs.find({event, emotion});
  return it == conditional_pairs.end() ? std::string{} : it->second;
}

SynthOutput generate_corpus(const SynthConfig& cfg) {
  if (cfg.fraction_conditional < 0 || cfg.fraction_conditional > 1 ||
      cfg.fraction_missing_condition < 0 || cfg.fraction_missing_condition > 1)
    throw ConfigError("fractions must lie in [0,1]");
  if (cfg.n_docs <= 0) throw ConfigError("n_docs must be positive");
  if (cfg.clause_len <= 0 || cfg.max_context <= 0)
    throw ConfigError("clause_len and max_context must be positive");
  const Pools pools = make_pools(cfg);

  SynthOutput out;
  out.table = make_table(pools);

  // Deterministic per-class counts (balance within rounding), then a seeded
  // shuffle of the class sequence.
  const int n_cond =
      static_cast<int>(std::lround(cfg.fraction_conditional * cfg.n_docs));
  const int n_missing =
      static_cast<int>(std::lround(cfg.fraction_missing_condition * n_cond));
  std::vector<int> doc_class;  // value = y_c
  for (int i = 0; i < n_missing; ++i) doc_class.push_back(1);
  for (int i = 0; i < n_cond - n_missing; ++i) doc_class.push_back(2);
  while (static_cast<int>(doc_class.size()) < cfg.n_docs) doc_class.push_back(0);

  RngStream root(cfg.seed);
  std::shuffle(doc_class.begin(), doc_class.end(), root.engine());

  int event_cursor = 0, cond_event_cursor = 0;
  for (int i = 0; i < cfg.n_docs; ++i) {
    RngStream rng = root.split(static_cast<std::uint64_t>(i));
    const int y_c = doc_class[i];
    Document doc;
    doc.id = "syn" + std::to_string(i);
    doc.source_id = doc.id;
    doc.origin = Origin::original;
    doc.y_c = y_c;

    // Cycle through the event pool for coverage; draw the emotion per
    // document (any causal emotion pairs with any event).
    const std::string emotion =
        em_tok(static_cast<int>(rng.next_below(pools.n_emotions)));
    std::string event, condition;
    if (y_c == 0) {
      event = ev_tok(event_cursor++ % pools.n_events);
    } else {
      event = ev_tok(pools.n_events + cond_event_cursor++ % pools.n_cond_events);
      condition = out.table.condition_for(event, emotion);
    }

    const int n_ctx = 1 + static_cast<int>(rng.next_below(cfg.max_context));
    const int n_clauses = n_ctx + 2;
    // Pick distinct positions for cause and emotion clauses.
    const int cause_pos = static_cast<int>(rng.next_below(n_clauses));
    int emo_pos = static_cast<int>(rng.next_below(n_clauses - 1));
    if (emo_pos >= cause_pos) ++emo_pos;

    // Which context slots carry the condition (PR), in context order.
    std::vector<bool> pr_slot(n_ctx, false);
    if (y_c == 2) {
      const int n_pr = 1 + static_cast<int>(rng.next_below(
                               std::min(2, n_ctx) == 2 ? 2 : 1));
      std::vector<int> slots(n_ctx);
      for (int s = 0; s < n_ctx; ++s) slots[s] = s;
      std::shuffle(slots.begin(), slots.end(), rng.engine());
      for (int s = 0; s < n_pr; ++s) pr_slot[slots[s]] = true;
    }

    int ctx_seen = 0;
    for (int pos = 0; pos < n_clauses; ++pos) {
      if (pos == cause_pos) {
        doc.clauses.push_back(role_clause(event, pools, cfg.clause_len, rng));
        doc.cause_idx.push_back(pos);
      } else if (pos == emo_pos) {
        doc.clauses.push_back(role_clause(emotion, pools, cfg.clause_len, rng));
        doc.emotion_idx = pos;
      } else {
        const bool pr = pr_slot[ctx_seen++];
        if (pr) {
          doc.clauses.push_back(
              role_clause(condition, pools, cfg.clause_len, rng));
          doc.ctx_type.push_back(ContextType::PR);
        } else {
          doc.clauses.push_back(filler_clause(pools, cfg.clause_len, rng));
          doc.ctx_type.push_back(ContextType::IR);
        }
      }
    }
    validate_document(doc);
    out.corpus.documents.push_back(std::move(doc));
  }
  out.corpus.rebuild_vocab();
  return out;
}

namespace {

bool has_prefix_token(const std::string& tok, const char* prefix) {
  const std::size_t n = std::char_traits<char>::length(prefix);
  if (tok.size() <= n || tok.compare(0, n, prefix) != 0) return false;
  return std::all_of(tok.begin() + n, tok.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

Targets oracle_label(const Document& doc, const CausalTable& table) {
  std::set<std::string> events, emotions;
  for (int ci : doc.cause_idx)
    for (const std::string& tok : doc.clauses[ci])
      if (has_prefix_token(tok, "ev")) events.insert(tok);
  for (const std::string& tok : doc.clauses[doc.emotion_idx])
    if (has_prefix_token(tok, "em")) emotions.insert(tok);
  if (events.size() != 1 || emotions.size() != 1)
    throw ValidationError("document " + doc.id +
                          ": ECP tokens not recognizable from the table");
  const std::string& event = *events.begin();
  const std::string& emotion = *emotions.begin();
  const bool known_pair = table.pairs.count({event, emotion}) > 0;
  const std::string condition = table.condition_for(event, emotion);
  if (!known_pair && condition.empty() &&
      !std::any_of(table.pairs.begin(), table.pairs.end(),
                   [&](const auto& kv) { return kv.first.first == event; }) &&
      !std::any_of(table.conditional_pairs.begin(),
                   table.conditional_pairs.end(),
                   [&](const auto& kv) { return kv.first.first == event; }))
    throw ValidationError("document " + doc.id + ": event " + event +
                          " absent from the causal table");

  Targets t;
  t.y_o = known_pair ? 1 : 0;
  const std::vector<int> ctx = doc.context_indices();
  t.mask.assign(ctx.size(), 0);
  bool cond_present = false;
  if (!condition.empty()) {
    for (std::size_t j = 0; j < ctx.size(); ++j) {
      const Clause& c = doc.clauses[ctx[j]];
      if (std::find(c.begin(), c.end(), condition) != c.end()) {
        t.mask[j] = 1;
        cond_present = true;
      }
    }
  }
  t.y = (t.y_o == 1 || (!condition.empty() && cond_present)) ? 1 : 0;
  return t;
}

BuildOptions synth_build_options(const CausalTable& table, int n) {
  BuildOptions opts;
  opts.n = n;
  // Keep every planted condition marker out of replacement context, not just
  // the recipient's own: a condition token in context then always means the
  // pair's own condition, so labels stay a function of per-clause content.
  std::set<std::string> conds;
  for (const auto& [_, cond] : table.conditional_pairs) conds.insert(cond);
  const std::vector<std::string> avoid(conds.begin(), conds.end());
  opts.avoid_tokens = [avoid](const Document&) { return avoid; };
  for (const std::string& em : table.inert_emotions)
    opts.emotion_donors.push_back(Clause{em});
  return opts;
}

CausalTable load_causal_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open causal table file: " + path);
  CausalTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      ordered_json j = ordered_json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      const std::string emotion = j.at("emotion").get<std::string>();
      if (kind == "pair") {
        table.pairs[{j.at("event").get<std::string>(), emotion}] = true;
      } else if (kind == "cond") {
        table.conditional_pairs[{j.at("event").get<std::string>(), emotion}] =
            j.at("condition").get<std::string>();
      } else if (kind == "inert") {
        table.inert_emotions.push_back(emotion);
      } else {
        throw ParseError("unknown table entry kind: " + kind);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

void save_causal_table(const CausalTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write causal table file: " + path);
  for (const auto& [key, _] : table.pairs) {
    ordered_json j;
    j["kind"] = "pair";
    j["event"] = key.first;
    j["emotion"] = key.second;
    out << j.dump() << "\n";
  }
  for (const auto& [key, cond] : table.conditional_pairs) {
    ordered_json j;
    j["kind"] = "cond";
    j["event"] = key.first;
    j["emotion"] = key.second;
    j["condition"] = cond;
    out << j.dump() << "\n";
  }
  for (const std::string& emotion : table.inert_emotions) {
    ordered_json j;
    j["kind"] = "inert";
    j["emotion"] = emotion;
    out << j.dump() << "\n";
  }
}

EmbeddingTable generate_embeddings(const SynthConfig& cfg, int dim) {
  const Pools pools = make_pools(cfg);
  EmbeddingTable table;
  table.dim = dim;
  std::vector<std::string> tokens{kUnkToken};
  for (int i = 0; i < pools.n_events + pools.n_cond_events; ++i)
    tokens.push_back(ev_tok(i));
  for (int i = 0; i < pools.n_emotions + pools.n_inert; ++i)
    tokens.push_back(em_tok(i));
  for (int i = 0; i < pools.n_conditions; ++i) tokens.push_back(cond_tok(i));
  for (int i = 0; i < pools.n_fillers; ++i) tokens.push_back(w_tok(i));

  RngStream rng(cfg.seed ^ 0x5eedface);
  for (const std::string& tok : tokens) {
    table.index.emplace(tok, static_cast<int>(table.tokens.size()));
    table.tokens.push_back(tok);
    for (int k = 0; k < dim; ++k)
      table.values.push_back(rng.uniform(-0.1, 0.1));
  }
  return table;
}

}  // namespace cecr
