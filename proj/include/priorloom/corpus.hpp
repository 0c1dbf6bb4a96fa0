#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace priorloom {

// Labeled text: one rating per document.
struct Corpus {
  std::vector<std::string> documents;
  std::vector<double> targets;

  std::size_t size() const { return documents.size(); }
};

enum class CorpusFormat { tsv, jsonl };

CorpusFormat parse_corpus_format(std::string_view name);

// tsv: "document<TAB>rating" per line (the last tab separates the rating).
// jsonl: {"text": ..., "rating": ...} per line. Blank lines are skipped.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

// Lowercased alphanumeric runs; with ngram_max == 2, adjacent pairs are
// appended as "first_second".
std::vector<std::string> tokenize(std::string_view text, int ngram_max);

struct Vocabulary {
  std::vector<std::string> terms;
  std::vector<std::size_t> doc_frequencies;
  std::vector<double> tfidf_scores;
  std::size_t n_documents = 0;
  int ngram_max = 1;

  std::size_t size() const { return terms.size(); }
  // ln((1 + n) / (1 + df)) + 1
  double idf(std::size_t term) const;
};

// Keeps terms appearing in at least `min_doc_count` documents, ranks them by
// max-over-documents tf-idf (tf = raw count) and keeps the top
// `feature_budget`. Ties go to the lexicographically smaller term.
Vocabulary build_vocabulary(const Corpus& corpus, int ngram_max, int min_doc_count,
                            int feature_budget);

enum class Weighting { counts, tfidf };

// Dense regression dataset. Rows are samples, columns are features.
struct FeatureMatrix {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(X.cols()); }
  // Throws ValidationError on shape mismatch or non-finite entries.
  void validate() const;
  FeatureMatrix rows(const std::vector<std::size_t>& index) const;
};

FeatureMatrix vectorize(const Corpus& corpus, const Vocabulary& vocab, Weighting scheme);

struct TrainTestSplit {
  FeatureMatrix train;
  FeatureMatrix test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

// Disjoint random row partition with exactly n_train training rows.
TrainTestSplit split(const FeatureMatrix& matrix, std::size_t n_train, std::uint64_t seed);

// One column of X: the representation of a feature in sample space.
struct FeatureVector {
  Eigen::VectorXd values;
  std::string name;
  std::size_t index = 0;
};

std::vector<FeatureVector> feature_columns(const FeatureMatrix& matrix);

// Stacks feature vectors back into an n x D matrix (column i = features[i]).
Eigen::MatrixXd stack_columns(const std::vector<FeatureVector>& features);

// "PLFM" container: magic, u32 version, u64 n, u64 D, row-major f64 X, f64 y,
// newline-joined UTF-8 feature names. All integers and floats little-endian.
void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& matrix);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace priorloom
