#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cecr/corpus.hpp"

using namespace cecr;

namespace {

Document sample_doc(int y_c = 0) {
  Document d;
  d.id = "d1";
  d.clauses = {{"he", "left"}, {"she", "cried"}, {"it", "rained"}};
  d.cause_idx = {0};
  d.emotion_idx = 1;
  d.y_c = y_c;
  d.ctx_type = {y_c == 2 ? ContextType::PR : ContextType::IR};
  return d;
}

std::string write_temp(const std::string& body) {
  static int counter = 0;
  std::string path =
      "/tmp/cecr_corpus_test_" + std::to_string(counter++) + ".jsonl";
  std::ofstream out(path, std::ios::binary);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("single record gives counts (0,0,1)") {
  Corpus c;
  c.documents.push_back(sample_doc(0));
  CHECK(c.counts() == CorpusCounts{0, 0, 1});
}

TEST_CASE("one record of each type gives counts (1,1,1)") {
  Corpus c;
  Document a = sample_doc(0), b = sample_doc(1), d = sample_doc(2);
  b.id = "d2";
  d.id = "d3";
  c.documents = {a, b, d};
  CHECK(c.counts() == CorpusCounts{1, 1, 1});
}

TEST_CASE("emotion inside the cause set is rejected") {
  Document d = sample_doc();
  d.cause_idx = {1};
  CHECK_THROWS_AS(validate_document(d), ValidationError);
}

TEST_CASE("validation covers index range and ctx alignment") {
  Document d = sample_doc();
  d.emotion_idx = 9;
  CHECK_THROWS_AS(validate_document(d), ValidationError);
  d = sample_doc();
  d.ctx_type = {};  // one context clause exists
  CHECK_THROWS_AS(validate_document(d), ValidationError);
  d = sample_doc(1);
  d.ctx_type = {ContextType::PR};  // missing-condition docs have no PR clause
  CHECK_THROWS_AS(validate_document(d), ValidationError);
}

TEST_CASE("document line round trip is byte identical") {
  const Document d = sample_doc(2);
  const std::string line = document_to_line(d);
  const Document back = document_from_line(line);
  CHECK(document_to_line(back) == line);
  CHECK(back.id == d.id);
  CHECK(back.clauses == d.clauses);
  CHECK(back.cause_idx == d.cause_idx);
  CHECK(back.emotion_idx == d.emotion_idx);
  CHECK(back.y_c == d.y_c);
  CHECK(back.ctx_type == d.ctx_type);
}

TEST_CASE("corpus file round trip is byte identical") {
  Corpus c;
  c.documents = {sample_doc(0), sample_doc(2)};
  c.documents[1].id = "d2";
  c.rebuild_vocab();
  const std::string p1 = write_temp("");
  save_corpus(c, p1);
  const Corpus back = load_corpus(p1);
  const std::string p2 = write_temp("");
  save_corpus(back, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  CHECK(s1.str().find("\"id\"") < s1.str().find("\"clauses\""));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("malformed lines raise parse errors") {
  CHECK_THROWS_AS(document_from_line("{not json"), ParseError);
  CHECK_THROWS_AS(document_from_line("{\"id\": \"x\"}"), ParseError);
  const std::string p = write_temp("{\"oops\": 1}\n");
  CHECK_THROWS_AS(load_corpus(p), ParseError);
  std::remove(p.c_str());
}

TEST_CASE("duplicate_per_pair splits multi-pair records") {
  RawRecord r;
  r.id = "doc7";
  r.clauses = {{"c0"}, {"c1"}, {"c2"}, {"c3"}, {"c4"}, {"c5"}};
  r.ecps = {{{0}, 1}, {{2}, 3}, {{4, 5}, 1}};
  const auto docs = duplicate_per_pair({r});
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].id == "doc7#0");
  CHECK(docs[2].id == "doc7#2");
  for (const Document& d : docs) {
    CHECK(d.source_id == "doc7");
    CHECK(d.clauses == r.clauses);
  }
  // Context sets differ per pair.
  CHECK(docs[0].context_indices() != docs[1].context_indices());
  CHECK(docs[0].context_indices() == std::vector<int>{2, 3, 4, 5});
  CHECK(docs[2].context_indices() == std::vector<int>{0, 2, 3});

  RawRecord single = r;
  single.ecps = {{{0}, 1}};
  const auto one = duplicate_per_pair({single});
  REQUIRE(one.size() == 1);
  CHECK(one[0].id == "doc7");  // identity case keeps the record id

  RawRecord empty = r;
  empty.ecps.clear();
  std::vector<std::string> warnings;
  CHECK(duplicate_per_pair({empty}, &warnings).empty());
  CHECK(warnings.size() == 1);
}

TEST_CASE("majority vote") {
  CHECK(majority_vote({1, 1, 0}) == 1);
  CHECK(majority_vote({0, 0, 0}) == 0);
  CHECK(majority_vote({1, 0, 1}) == 1);
  CHECK(majority_vote({0, 1, 0}) == 0);
}

TEST_CASE("annotation aggregation implements the label formula") {
  auto judge = [](int y_ce, std::optional<int> y_cv,
                  std::vector<ContextType> ctx) {
    AnnotatorJudgment j;
    j.doc_id = "d";
    j.y_ce = y_ce;
    j.y_cv = y_cv;
    j.ctx_type = std::move(ctx);
    return j;
  };
  using CT = ContextType;

  // y_ce votes (1,1,1), y_cv votes (1,1,0) -> y_c = 2
  auto agg = aggregate_annotations({judge(1, 1, {CT::PR}), judge(1, 1, {CT::PR}),
                                    judge(1, 0, {CT::IR})});
  CHECK(agg.y_c == 2);
  CHECK(agg.ctx_type == std::vector<CT>{CT::PR});

  // y_ce votes (0,0,1) -> y_c = 0 regardless of y_cv
  agg = aggregate_annotations({judge(0, std::nullopt, {CT::IR}),
                               judge(0, std::nullopt, {CT::IR}),
                               judge(1, 1, {CT::PR})});
  CHECK(agg.y_c == 0);

  // y_ce votes (1,1,0), y_cv votes (0,0,-) -> y_c = 1; ctx forced to IR
  agg = aggregate_annotations({judge(1, 0, {CT::PR}), judge(1, 0, {CT::PR}),
                               judge(0, std::nullopt, {CT::IR})});
  CHECK(agg.y_c == 1);
  CHECK(agg.ctx_type == std::vector<CT>{CT::IR});
}

TEST_CASE("aggregation is invariant to annotator order") {
  std::array<AnnotatorJudgment, 3> js;
  js[0] = {"d", 1, 1, {ContextType::PR, ContextType::IR}};
  js[1] = {"d", 1, 0, {ContextType::PR, ContextType::PR}};
  js[2] = {"d", 1, 1, {ContextType::IR, ContextType::IR}};
  const AggregatedLabels ref = aggregate_annotations(js);
  std::sort(js.begin(), js.end(),
            [](const auto& a, const auto& b) { return a.y_cv < b.y_cv; });
  std::array<AnnotatorJudgment, 3> perm{js[2], js[0], js[1]};
  const AggregatedLabels agg = aggregate_annotations(perm);
  CHECK(agg.y_c == ref.y_c);
  CHECK(agg.ctx_type == ref.ctx_type);
}

TEST_CASE("targets derived from y_c and context types") {
  Document d = sample_doc(0);
  d.clauses.push_back({"more"});
  d.ctx_type = {ContextType::IR, ContextType::IR};
  Targets t = derive_targets(d);
  CHECK(t.y == 1);
  CHECK(t.y_o == 1);
  CHECK(t.mask == std::vector<int>{0, 0});

  d = sample_doc(1);
  t = derive_targets(d);
  CHECK(t.y == 0);
  CHECK(t.y_o == 0);
  CHECK(t.mask == std::vector<int>{0});

  d = sample_doc(2);
  d.clauses.push_back({"a"});
  d.clauses.push_back({"b"});
  d.ctx_type = {ContextType::PR, ContextType::IR, ContextType::PR};
  t = derive_targets(d);
  CHECK(t.y == 1);
  CHECK(t.y_o == 0);
  CHECK(t.mask == std::vector<int>{1, 0, 1});
}

TEST_CASE("agreement rate") {
  auto judge = [](int y_ce, std::optional<int> y_cv, ContextType ct) {
    AnnotatorJudgment j;
    j.doc_id = "d";
    j.y_ce = y_ce;
    j.y_cv = y_cv;
    j.ctx_type = {ct};
    return j;
  };
  using CT = ContextType;
  std::vector<std::array<AnnotatorJudgment, 3>> unanimous{
      {judge(1, 1, CT::PR), judge(1, 1, CT::PR), judge(1, 1, CT::PR)}};
  CHECK(agreement_rate(unanimous, AgreementLabel::y_ce) == 1.0);
  CHECK(agreement_rate(unanimous, AgreementLabel::y_cv) == 1.0);
  CHECK(agreement_rate(unanimous, AgreementLabel::ctx_type) == 1.0);

  // votes (1,1,0): only 1 of the 3 annotator pairs agrees
  std::vector<std::array<AnnotatorJudgment, 3>> split{
      {judge(1, 1, CT::PR), judge(1, 1, CT::PR), judge(0, std::nullopt, CT::PR)}};
  CHECK(agreement_rate(split, AgreementLabel::y_ce) ==
        doctest::Approx(1.0 / 3.0));
  // y_cv agreement only counts pairs where both judged it
  CHECK(agreement_rate(split, AgreementLabel::y_cv) == 1.0);
}

TEST_CASE("embedding table io and UNK fallback") {
  EmbeddingTable t;
  t.dim = 2;
  t.tokens = {kUnkToken, "rain"};
  t.index = {{kUnkToken, 0}, {"rain", 1}};
  t.values = {0.0, 0.0, 0.25, -0.125};
  const std::string p = write_temp("");
  save_embeddings(t, p);
  const EmbeddingTable back = load_embeddings(p);
  CHECK(back.dim == 2);
  CHECK(back.tokens == t.tokens);
  CHECK(back.values == t.values);
  CHECK(back.row_of("rain") == 1);
  CHECK(back.row_of("never-seen") == back.unk_row());
  std::remove(p.c_str());
}
