#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "priorloom/corpus.hpp"
#include "priorloom/errors.hpp"

using namespace priorloom;

namespace {

std::filesystem::path write_text(const testing::TempDir& dir, const std::string& name, const std::string& text) {
  auto p = dir.path() / name;
  std::ofstream(p) << text;
  return p;
}

Corpus make_corpus(std::vector<std::string> docs) {
  Corpus c;
  c.documents = std::move(docs);
  c.targets.assign(c.documents.size(), 0.0);
  return c;
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("tsv corpus loads documents and ratings") {
  testing::TempDir dir("corpus");
  auto p = write_text(dir, "c.tsv", "great movie\t5\nawful\t1\n\nfine, with a\ttab\t4\n");
  const auto c = load_corpus(p, CorpusFormat::tsv);
  REQUIRE(c.size() == 3);
  CHECK(c.targets == std::vector<double>{5, 1, 4});
  CHECK(c.documents[2] == "fine, with a\ttab");
}

TEST_CASE("jsonl corpus loads documents and ratings") {
  testing::TempDir dir("corpus");
  auto p = write_text(dir, "c.jsonl", "{\"text\":\"a b\",\"rating\":2.5}\n{\"text\":\"c\",\"rating\":-1}\n");
  const auto c = load_corpus(p, CorpusFormat::jsonl);
  REQUIRE(c.size() == 2);
  CHECK(c.targets[0] == 2.5);
  CHECK(c.documents[1] == "c");
}

TEST_CASE("empty corpus and malformed ratings are rejected") {
  testing::TempDir dir("corpus");
  auto empty = write_text(dir, "e.tsv", "");
  CHECK_THROWS_WITH_AS(load_corpus(empty, CorpusFormat::tsv), doctest::Contains("empty corpus"), ParseError);

  auto bad = write_text(dir, "b.tsv", "ok\t3\nnice film\tfive\n");
  try {
    load_corpus(bad, CorpusFormat::tsv);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("five") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_corpus_format("xml"), ValidationError);
}

TEST_CASE("tokenize lowercases and forms bigrams") {
  CHECK(tokenize("Good, GOOD bad!", 1) == std::vector<std::string>{"good", "good", "bad"});
  CHECK(tokenize("a b c", 2) == std::vector<std::string>{"a", "b", "c", "a_b", "b_c"});
  CHECK_THROWS_AS(tokenize("x", 3), ValidationError);
}

TEST_CASE("vocabulary applies the document-frequency threshold") {
  auto c = make_corpus({"good zebra", "good film", "good plot film"});
  const auto v = build_vocabulary(c, 1, 2, 2);
  CHECK(v.terms == std::vector<std::string>{"film", "good"});
  CHECK_THROWS_AS(build_vocabulary(c, 1, 2, 3), ValidationError);
}

TEST_CASE("vocabulary ties at the budget keep the lexicographically smaller term") {
  auto c = make_corpus({"beta alpha", "beta alpha", "gamma"});
  const auto v = build_vocabulary(c, 1, 1, 2);
  // alpha and beta share df and score; gamma scores higher (rarer).
  CHECK(v.terms == std::vector<std::string>{"gamma", "alpha"});
}

TEST_CASE("counts weighting gives raw term counts") {
  auto c = make_corpus({"good good bad", "nothing here"});
  Vocabulary v;
  v.terms = {"good", "bad"};
  v.doc_frequencies = {1, 1};
  v.n_documents = 2;
  const auto m = vectorize(c, v, Weighting::counts);
  CHECK(m.X(0, 0) == 2.0);
  CHECK(m.X(0, 1) == 1.0);
  CHECK(m.X.row(1).isZero(0.0));
}

TEST_CASE("tfidf weighting on a two-document corpus") {
  auto c = make_corpus({"good bad", "good good"});
  const auto v = build_vocabulary(c, 1, 1, 2);
  REQUIRE(v.terms == std::vector<std::string>{"good", "bad"});
  const auto m = vectorize(c, v, Weighting::tfidf);
  // idf(good) = ln(3/3) + 1, idf(bad) = ln(3/2) + 1
  CHECK(m.X(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.X(1, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(m.X(0, 1) == doctest::Approx(1.4054651081081644).epsilon(1e-15));
  CHECK(m.X(1, 1) == 0.0);
}

TEST_CASE("split sizes, determinism and bounds") {
  auto m = testing::random_dataset(40, 3, 7);
  const auto a = split(m, 10, 3), b = split(m, 10, 3);
  CHECK(a.train.n() == 10);
  CHECK(a.test.n() == 30);
  CHECK(a.train_rows == b.train_rows);
  std::vector<bool> seen(40, false);
  for (auto r : a.train_rows) seen[r] = true;
  for (auto r : a.test_rows) {
    CHECK_FALSE(seen[r]);
    seen[r] = true;
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool s) { return s; }));
  CHECK_THROWS_AS(split(m, 40, 0), ValidationError);
  CHECK_THROWS_AS(split(m, 0, 0), ValidationError);
}

TEST_CASE("feature columns round trip") {
  Eigen::MatrixXd id = Eigen::MatrixXd::Identity(2, 2);
  FeatureMatrix m{id, Eigen::VectorXd::Zero(2), {"a", "b"}};
  const auto cols = feature_columns(m);
  REQUIRE(cols.size() == 2);
  CHECK(cols[0].values == Eigen::Vector2d(1, 0));
  CHECK(cols[1].name == "b");

  auto r = testing::random_dataset(6, 4, 1);
  CHECK(stack_columns(feature_columns(r)) == r.X);
}

TEST_CASE("feature matrix file round trip is exact") {
  testing::TempDir dir("plfm");
  auto m = testing::random_dataset(5, 3, 11);
  write_feature_matrix(dir.path() / "m.plfm", m);
  const auto back = read_feature_matrix(dir.path() / "m.plfm");
  CHECK(back.X == m.X);
  CHECK(back.y == m.y);
  CHECK(back.feature_names == m.feature_names);

  std::ofstream(dir.path() / "bad.plfm") << "nope";
  CHECK_THROWS_AS(read_feature_matrix(dir.path() / "bad.plfm"), ParseError);
}

}  // TEST_SUITE
