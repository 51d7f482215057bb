#include "cecr/model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cecr {

const char* to_string(EncoderKind e) {
  switch (e) {
    case EncoderKind::CC: return "CC";
    case EncoderKind::BL: return "BL";
    case EncoderKind::SA: return "SA";
  }
  return "?";
}

EncoderKind encoder_from_string(const std::string& s) {
  if (s == "CC" || s == "cc") return EncoderKind::CC;
  if (s == "BL" || s == "bl") return EncoderKind::BL;
  if (s == "SA" || s == "sa") return EncoderKind::SA;
  throw ValidationError("unknown encoder: " + s);
}

int ModelConfig::xhat_width() const {
  switch (encoder) {
    case EncoderKind::CC:
      return (max_causes + 1 + max_context) * clause_width();
    case EncoderKind::BL:
    case EncoderKind::SA:
      return (max_causes + 1) * clause_width();
  }
  return 0;
}

std::vector<Parameter*> ModelParams::all() {
  std::vector<Parameter*> out;
  for (Parameter* p :
       {&embedding, &word_fwd.w_ih, &word_fwd.w_hh, &word_fwd.bias,
        &word_bwd.w_ih, &word_bwd.w_hh, &word_bwd.bias, &w_cls,
        &clause_fwd.w_ih, &clause_fwd.w_hh, &clause_fwd.bias,
        &clause_bwd.w_ih, &clause_bwd.w_hh, &clause_bwd.bias, &w_con, &b_con,
        &w_c, &w_o})
    if (p->value.size() > 0) out.push_back(p);
  return out;
}

std::vector<const Parameter*> ModelParams::all() const {
  std::vector<const Parameter*> out;
  for (Parameter* p : const_cast<ModelParams*>(this)->all()) out.push_back(p);
  return out;
}

double ModelParams::squared_l2() const {
  double total = 0.0;
  for (const Parameter* p : all())
    for (double v : p->value.data) total += v * v;
  return total;
}

void ModelParams::zero_grads() {
  for (Parameter* p : all()) p->zero_grad();
}

int ModelParams::token_row(const std::string& token) const {
  auto it = vocab.find(token);
  return it == vocab.end() ? unk_row : it->second;
}

namespace {

Tensor uniform_tensor(std::vector<std::size_t> shape, RngStream& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(-0.1, 0.1);
  return t;
}

LstmParams init_lstm(const std::string& prefix, int input, int hidden,
                     RngStream& rng) {
  const std::size_t h4 = static_cast<std::size_t>(4 * hidden);
  LstmParams p;
  p.w_ih = Parameter(prefix + ".w_ih",
                     uniform_tensor({h4, static_cast<std::size_t>(input)}, rng));
  p.w_hh = Parameter(prefix + ".w_hh",
                     uniform_tensor({h4, static_cast<std::size_t>(hidden)}, rng));
  p.bias = Parameter(prefix + ".b", uniform_tensor({h4}, rng));
  return p;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, const EmbeddingTable& emb,
                        std::uint64_t seed) {
  if (cfg.hidden <= 0) throw ValidationError("hidden must be positive");
  if (cfg.heads != 1) throw ValidationError("heads must be 1");
  if (cfg.mask_threshold <= 0.0 || cfg.mask_threshold >= 1.0)
    throw ValidationError("mask_threshold must lie in (0,1)");
  if (emb.dim != cfg.embed_dim)
    throw ValidationError("embedding dimension " + std::to_string(emb.dim) +
                          " does not match configured " +
                          std::to_string(cfg.embed_dim));
  RngStream rng(seed);
  ModelParams p;
  p.config = cfg;
  p.vocab = emb.index;
  p.unk_row = emb.unk_row();
  p.embedding = Parameter(
      "embedding", Tensor::matrix(emb.tokens.size(), emb.dim, emb.values));
  const int h = cfg.hidden;
  const int cw = cfg.clause_width();
  p.word_fwd = init_lstm("word_fwd", cfg.embed_dim, h, rng);
  p.word_bwd = init_lstm("word_bwd", cfg.embed_dim, h, rng);
  p.w_cls = Parameter("w_cls",
                      uniform_tensor({1, static_cast<std::size_t>(cw)}, rng));
  if (cfg.encoder == EncoderKind::BL) {
    p.clause_fwd = init_lstm("clause_fwd", cw, h, rng);
    p.clause_bwd = init_lstm("clause_bwd", cw, h, rng);
  }
  if (cfg.use_cmm) {
    p.w_con = Parameter("w_con",
                        uniform_tensor({1, static_cast<std::size_t>(cw)}, rng));
    p.b_con = Parameter("b_con", uniform_tensor({1}, rng));
  }
  p.w_c = Parameter(
      "w_c",
      uniform_tensor({2, static_cast<std::size_t>(cfg.xhat_width())}, rng));
  if (cfg.use_pam || cfg.compute_yo)
    p.w_o = Parameter(
        "w_o",
        uniform_tensor({2, static_cast<std::size_t>(cfg.x_width())}, rng));
  return p;
}

BoundParams bind_params(Graph& g, ModelParams& p) {
  BoundParams b;
  auto bind = [&](Parameter& param) {
    Graph::NodeId id = g.param(param);
    b.all_ids.push_back(id);
    return id;
  };
  b.embedding = bind(p.embedding);
  b.word_fwd_w_ih = bind(p.word_fwd.w_ih);
  b.word_fwd_w_hh = bind(p.word_fwd.w_hh);
  b.word_fwd_b = bind(p.word_fwd.bias);
  b.word_bwd_w_ih = bind(p.word_bwd.w_ih);
  b.word_bwd_w_hh = bind(p.word_bwd.w_hh);
  b.word_bwd_b = bind(p.word_bwd.bias);
  b.w_cls = bind(p.w_cls);
  if (p.clause_fwd.w_ih.value.size() > 0) {
    b.clause_fwd_w_ih = bind(p.clause_fwd.w_ih);
    b.clause_fwd_w_hh = bind(p.clause_fwd.w_hh);
    b.clause_fwd_b = bind(p.clause_fwd.bias);
    b.clause_bwd_w_ih = bind(p.clause_bwd.w_ih);
    b.clause_bwd_w_hh = bind(p.clause_bwd.w_hh);
    b.clause_bwd_b = bind(p.clause_bwd.bias);
  }
  if (p.w_con.value.size() > 0) {
    b.w_con = bind(p.w_con);
    b.b_con = bind(p.b_con);
  }
  b.w_c = bind(p.w_c);
  if (p.w_o.value.size() > 0) b.w_o = bind(p.w_o);
  return b;
}

namespace {

struct LstmBound {
  Graph::NodeId w_ih, w_hh, b;
};

// One LSTM direction; returns the hidden state at every position.
std::vector<Graph::NodeId> lstm_pass(Graph& g, const LstmBound& w, int hidden,
                                     const std::vector<Graph::NodeId>& inputs,
                                     bool reverse) {
  const std::size_t h = static_cast<std::size_t>(hidden);
  Graph::NodeId hs = g.input(Tensor::zeros({h}), "h0");
  Graph::NodeId cs = g.input(Tensor::zeros({h}), "c0");
  std::vector<Graph::NodeId> out(inputs.size());
  for (std::size_t step = 0; step < inputs.size(); ++step) {
    const std::size_t pos = reverse ? inputs.size() - 1 - step : step;
    Graph::NodeId hc = g.lstm_cell(w.w_ih, w.w_hh, w.b, inputs[pos], hs, cs);
    hs = g.slice(hc, 0, h);
    cs = g.slice(hc, h, h);
    out[pos] = hs;
  }
  return out;
}

std::vector<Graph::NodeId> bilstm(Graph& g, const LstmBound& fwd,
                                  const LstmBound& bwd, int hidden,
                                  const std::vector<Graph::NodeId>& inputs) {
  const std::vector<Graph::NodeId> f = lstm_pass(g, fwd, hidden, inputs, false);
  const std::vector<Graph::NodeId> b = lstm_pass(g, bwd, hidden, inputs, true);
  std::vector<Graph::NodeId> out(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    out[i] = g.concat({f[i], b[i]});
  return out;
}

// attention-pooled combination: sum_j softmax(logits)_j * vecs[j]
Graph::NodeId attention_sum(Graph& g, const std::vector<Graph::NodeId>& logits,
                            const std::vector<Graph::NodeId>& vecs) {
  Graph::NodeId alpha = g.row_softmax(g.concat(logits));
  Graph::NodeId acc = g.scale_by(vecs[0], g.pick(alpha, 0));
  for (std::size_t j = 1; j < vecs.size(); ++j)
    acc = g.add(acc, g.scale_by(vecs[j], g.pick(alpha, j)));
  return acc;
}

Graph::NodeId dot_node(Graph& g, Graph::NodeId a, Graph::NodeId b) {
  return g.sum(g.mul(a, b));
}

Graph::NodeId zero_vec(Graph& g, std::size_t width) {
  return g.input(Tensor::zeros({width}), "pad");
}

}  // namespace

Graph::NodeId sa_attend(Graph& g, Graph::NodeId anchor,
                        const std::vector<Graph::NodeId>& context) {
  if (context.empty()) return anchor;
  std::vector<Graph::NodeId> logits(context.size());
  for (std::size_t j = 0; j < context.size(); ++j)
    logits[j] = dot_node(g, anchor, context[j]);
  return g.add(anchor, attention_sum(g, logits, context));
}

Graph::NodeId pam_blend(Graph& g, Graph::NodeId p_yo, Graph::NodeId p_yc,
                        Graph::NodeId* lambda_out) {
  Graph::NodeId lambda = g.pick(p_yo, 1);
  if (lambda_out) *lambda_out = lambda;
  Graph::NodeId one = g.input(Tensor::scalar(1.0), "one");
  Graph::NodeId one_minus = g.add(one, g.scale(lambda, -1.0));
  return g.add(g.scale_by(p_yo, lambda), g.scale_by(p_yc, one_minus));
}

Graph::NodeId embed_clause(Graph& g, const BoundParams& bound,
                           const ModelParams& params, const Clause& clause) {
  if (clause.empty()) throw ValidationError("cannot embed an empty clause");
  std::vector<int> ids;
  ids.reserve(clause.size());
  for (const std::string& tok : clause) ids.push_back(params.token_row(tok));
  Graph::NodeId rows = g.gather(bound.embedding, ids);
  const std::size_t d = static_cast<std::size_t>(params.config.embed_dim);
  std::vector<Graph::NodeId> words(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    words[i] = g.slice(rows, i * d, d);
  const std::vector<Graph::NodeId> hs =
      bilstm(g, {bound.word_fwd_w_ih, bound.word_fwd_w_hh, bound.word_fwd_b},
             {bound.word_bwd_w_ih, bound.word_bwd_w_hh, bound.word_bwd_b},
             params.config.hidden, words);
  std::vector<Graph::NodeId> logits(hs.size());
  for (std::size_t j = 0; j < hs.size(); ++j)
    logits[j] = g.matmul(bound.w_cls, hs[j]);
  return attention_sum(g, logits, hs);
}

ForwardNodes forward_doc(Graph& g, const BoundParams& bound,
                         ModelParams& params, const Document& doc, bool train,
                         RngStream& rng) {
  const ModelConfig& cfg = params.config;
  const std::size_t cw = static_cast<std::size_t>(cfg.clause_width());

  auto embed = [&](int clause_idx) {
    Graph::NodeId v = embed_clause(g, bound, params, doc.clauses[clause_idx]);
    return g.dropout(v, cfg.dropout, train, rng);
  };

  std::vector<Graph::NodeId> cause_vecs;
  for (int ci : doc.cause_idx) cause_vecs.push_back(embed(ci));
  Graph::NodeId emo_vec = embed(doc.emotion_idx);
  std::vector<Graph::NodeId> con_vecs;
  for (int idx : doc.context_indices()) con_vecs.push_back(embed(idx));

  ForwardNodes out;

  // Context Masking Module: per-clause PR probability gates the vector.
  std::vector<Graph::NodeId> con_hat = con_vecs;
  if (cfg.use_cmm) {
    for (std::size_t j = 0; j < con_vecs.size(); ++j) {
      Graph::NodeId logit =
          g.add(g.matmul(bound.w_con, con_vecs[j]), bound.b_con);
      Graph::NodeId prob = g.sigmoid(logit);
      out.mask_probs.push_back(prob);
      con_hat[j] = g.scale_by(con_vecs[j], prob);
    }
  }

  // x = [c; e] padded to the corpus-wide maximum cause count.
  std::vector<Graph::NodeId> x_parts = cause_vecs;
  while (x_parts.size() < static_cast<std::size_t>(cfg.max_causes))
    x_parts.push_back(zero_vec(g, cw));
  x_parts.push_back(emo_vec);
  Graph::NodeId x = g.concat(x_parts);

  // Context encoding.
  Graph::NodeId xhat = -1;
  switch (cfg.encoder) {
    case EncoderKind::CC: {
      std::vector<Graph::NodeId> parts = x_parts;
      for (Graph::NodeId c : con_hat) parts.push_back(c);
      for (std::size_t j = con_hat.size();
           j < static_cast<std::size_t>(cfg.max_context); ++j)
        parts.push_back(zero_vec(g, cw));
      xhat = g.concat(parts);
      break;
    }
    case EncoderKind::BL: {
      std::vector<Graph::NodeId> seq = cause_vecs;
      seq.push_back(emo_vec);
      for (Graph::NodeId c : con_hat) seq.push_back(c);
      const std::vector<Graph::NodeId> hs = bilstm(
          g,
          {bound.clause_fwd_w_ih, bound.clause_fwd_w_hh, bound.clause_fwd_b},
          {bound.clause_bwd_w_ih, bound.clause_bwd_w_hh, bound.clause_bwd_b},
          cfg.hidden, seq);
      std::vector<Graph::NodeId> parts(hs.begin(),
                                       hs.begin() + cause_vecs.size());
      while (parts.size() < static_cast<std::size_t>(cfg.max_causes))
        parts.push_back(zero_vec(g, cw));
      parts.push_back(hs[cause_vecs.size()]);
      xhat = g.concat(parts);
      break;
    }
    case EncoderKind::SA: {
      std::vector<Graph::NodeId> parts;
      for (Graph::NodeId c : cause_vecs) parts.push_back(sa_attend(g, c, con_hat));
      while (parts.size() < static_cast<std::size_t>(cfg.max_causes))
        parts.push_back(zero_vec(g, cw));
      parts.push_back(sa_attend(g, emo_vec, con_hat));
      xhat = g.concat(parts);
      break;
    }
  }

  out.p_yc = g.row_softmax(g.matmul(bound.w_c, xhat));
  if (cfg.use_pam || cfg.compute_yo)
    out.p_yo = g.row_softmax(g.matmul(bound.w_o, x));
  if (cfg.use_pam) {
    out.p_y = pam_blend(g, out.p_yo, out.p_yc, &out.lambda);
  } else {
    out.p_y = out.p_yc;
  }
  return out;
}

ForwardOutput read_output(const Graph& g, const ForwardNodes& nodes) {
  ForwardOutput out;
  out.p_y = g.value(nodes.p_y).data;
  out.p_yc = g.value(nodes.p_yc).data;
  if (nodes.p_yo >= 0) {
    out.p_yo = g.value(nodes.p_yo).data;
    out.lambda = out.p_yo[1];
  }
  for (Graph::NodeId m : nodes.mask_probs)
    out.mask_probs.push_back(g.value(m).item());
  return out;
}

ForwardOutput run_forward(ModelParams& params, const Document& doc) {
  Graph g;
  BoundParams bound = bind_params(g, params);
  RngStream rng(0);
  ForwardNodes nodes = forward_doc(g, bound, params, doc, /*train=*/false, rng);
  return read_output(g, nodes);
}

namespace {

void write_tensor(std::ofstream& out, const Parameter& p) {
  out << p.name << " " << p.value.rank();
  for (std::size_t e : p.value.shape) out << " " << e;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    std::snprintf(buf, sizeof(buf), i ? " %.17g" : "%.17g", p.value.data[i]);
    out << buf;
  }
  out << "\n";
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write checkpoint: " + path);
  const ModelConfig& c = params.config;
  out << "cecr-checkpoint 1\n";
  out << "encoder " << to_string(c.encoder) << "\n";
  out << "embed_dim " << c.embed_dim << "\n";
  out << "hidden " << c.hidden << "\n";
  out << "use_cmm " << (c.use_cmm ? 1 : 0) << "\n";
  out << "use_pam " << (c.use_pam ? 1 : 0) << "\n";
  out << "compute_yo " << (c.compute_yo ? 1 : 0) << "\n";
  out << "heads " << c.heads << "\n";
  out << "max_clause_len " << c.max_clause_len << "\n";
  out << "max_context " << c.max_context << "\n";
  out << "max_causes " << c.max_causes << "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", c.dropout);
  out << "dropout " << buf << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", c.mask_threshold);
  out << "mask_threshold " << buf << "\n";
  // Vocab in row order so load rebuilds the same table.
  std::vector<std::string> by_row(params.vocab.size());
  for (const auto& [tok, row] : params.vocab) by_row[row] = tok;
  out << "vocab " << by_row.size() << "\n";
  for (const std::string& tok : by_row) out << tok << "\n";
  const auto all = params.all();
  out << "params " << all.size() << "\n";
  for (const Parameter* p : all) write_tensor(out, *p);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "cecr-checkpoint" || version != 1)
    throw ParseError("not a checkpoint file: " + path);
  ModelConfig cfg;
  std::string key;
  auto expect = [&](const char* want) {
    in >> key;
    if (key != want)
      throw ParseError("checkpoint: expected key " + std::string(want) +
                       ", got " + key);
  };
  std::string enc;
  expect("encoder");
  in >> enc;
  cfg.encoder = encoder_from_string(enc);
  int flag;
  expect("embed_dim"); in >> cfg.embed_dim;
  expect("hidden"); in >> cfg.hidden;
  expect("use_cmm"); in >> flag; cfg.use_cmm = flag != 0;
  expect("use_pam"); in >> flag; cfg.use_pam = flag != 0;
  expect("compute_yo"); in >> flag; cfg.compute_yo = flag != 0;
  expect("heads"); in >> cfg.heads;
  expect("max_clause_len"); in >> cfg.max_clause_len;
  expect("max_context"); in >> cfg.max_context;
  expect("max_causes"); in >> cfg.max_causes;
  expect("dropout"); in >> cfg.dropout;
  expect("mask_threshold"); in >> cfg.mask_threshold;

  ModelParams p;
  p.config = cfg;
  std::size_t vocab_size = 0;
  expect("vocab");
  in >> vocab_size;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    std::string tok;
    in >> tok;
    p.vocab.emplace(tok, static_cast<int>(i));
  }
  auto unk = p.vocab.find(kUnkToken);
  if (unk == p.vocab.end())
    throw ParseError("checkpoint vocab has no " + std::string(kUnkToken));
  p.unk_row = unk->second;

  std::size_t n_params = 0;
  expect("params");
  in >> n_params;
  std::unordered_map<std::string, Parameter> loaded;
  for (std::size_t i = 0; i < n_params; ++i) {
    std::string name;
    std::size_t rank;
    in >> name >> rank;
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (std::size_t& e : shape) {
      in >> e;
      total *= e;
    }
    Tensor t = Tensor::zeros(shape);
    for (std::size_t k = 0; k < total; ++k) in >> t.data[k];
    loaded.emplace(name, Parameter(name, std::move(t)));
  }
  if (!in) throw ParseError("truncated checkpoint: " + path);
  auto take = [&](const char* name) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw ParseError("checkpoint missing parameter " + std::string(name));
    return std::move(it->second);
  };
  auto take_opt = [&](const char* name) {
    auto it = loaded.find(name);
    return it == loaded.end() ? Parameter{} : std::move(it->second);
  };
  p.embedding = take("embedding");
  p.word_fwd = {take("word_fwd.w_ih"), take("word_fwd.w_hh"),
                take("word_fwd.b")};
  p.word_bwd = {take("word_bwd.w_ih"), take("word_bwd.w_hh"),
                take("word_bwd.b")};
  p.w_cls = take("w_cls");
  if (cfg.encoder == EncoderKind::BL) {
    p.clause_fwd = {take("clause_fwd.w_ih"), take("clause_fwd.w_hh"),
                    take("clause_fwd.b")};
    p.clause_bwd = {take("clause_bwd.w_ih"), take("clause_bwd.w_hh"),
                    take("clause_bwd.b")};
  }
  if (cfg.use_cmm) {
    p.w_con = take("w_con");
    p.b_con = take("b_con");
  }
  p.w_c = take("w_c");
  p.w_o = take_opt("w_o");
  if ((cfg.use_pam || cfg.compute_yo) && p.w_o.value.size() == 0)
    throw ParseError("checkpoint missing parameter w_o");
  return p;
}

}  // namespace cecr
