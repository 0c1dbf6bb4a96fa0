#include "priorloom/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.hpp"
#include "priorloom/errors.hpp"

namespace priorloom {
namespace {

constexpr std::uint32_t kMatrixVersion = 1;

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace

CorpusFormat parse_corpus_format(std::string_view name) {
  if (name == "tsv") return CorpusFormat::tsv;
  if (name == "jsonl") return CorpusFormat::jsonl;
  throw ValidationError("unknown corpus format '" + std::string(name) + "' (expected tsv or jsonl)");
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file " + path.string());

  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::string text;
    double rating = 0.0;
    if (format == CorpusFormat::tsv) {
      const auto tab = line.rfind('\t');
      if (tab == std::string::npos) throw ParseError("record has no TAB-separated rating", lineno);
      text = line.substr(0, tab);
      const std::string field = line.substr(tab + 1);
      if (!parse_double(field, rating))
        throw ParseError("non-numeric rating '" + field + "'", lineno);
    } else {
      nlohmann::json rec;
      try {
        rec = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed json record: ") + e.what(), lineno);
      }
      if (!rec.is_object() || !rec.contains("text") || !rec.contains("rating") ||
          !rec["text"].is_string())
        throw ParseError("record must be an object with string \"text\" and \"rating\"", lineno);
      const auto& r = rec["rating"];
      if (r.is_number()) {
        rating = r.get<double>();
        if (!std::isfinite(rating)) throw ParseError("non-finite rating", lineno);
      } else if (!(r.is_string() && parse_double(r.get<std::string>(), rating))) {
        throw ParseError("non-numeric rating " + r.dump(), lineno);
      }
      text = rec["text"].get<std::string>();
    }
    corpus.documents.push_back(std::move(text));
    corpus.targets.push_back(rating);
  }
  if (in.bad()) throw ParseError("error reading corpus file " + path.string());
  if (corpus.documents.empty()) throw ParseError("empty corpus: " + path.string());
  return corpus;
}

std::vector<std::string> tokenize(std::string_view text, int ngram_max) {
  if (ngram_max != 1 && ngram_max != 2) throw ValidationError("ngram_max must be 1 or 2");
  std::vector<std::string> unigrams;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      unigrams.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) unigrams.push_back(std::move(current));

  std::vector<std::string> tokens = unigrams;
  if (ngram_max == 2)
    for (std::size_t i = 0; i + 1 < unigrams.size(); ++i)
      tokens.push_back(unigrams[i] + "_" + unigrams[i + 1]);
  return tokens;
}

double Vocabulary::idf(std::size_t term) const {
  const double n = static_cast<double>(n_documents);
  const double df = static_cast<double>(doc_frequencies.at(term));
  return std::log((1.0 + n) / (1.0 + df)) + 1.0;
}

Vocabulary build_vocabulary(const Corpus& corpus, int ngram_max, int min_doc_count,
                            int feature_budget) {
  if (feature_budget < 1) throw ValidationError("feature_budget must be >= 1");
  if (ngram_max != 1 && ngram_max != 2) throw ValidationError("ngram_max must be 1 or 2");

  // Ordered map keeps every downstream pass deterministic.
  std::map<std::string, std::size_t> df;
  std::vector<std::unordered_map<std::string, std::size_t>> doc_counts;
  doc_counts.reserve(corpus.size());
  for (const auto& doc : corpus.documents) {
    std::unordered_map<std::string, std::size_t> counts;
    for (auto& tok : tokenize(doc, ngram_max)) ++counts[tok];
    for (const auto& [tok, c] : counts) ++df[tok];
    doc_counts.push_back(std::move(counts));
  }

  const double n = static_cast<double>(corpus.size());
  struct Candidate {
    std::string term;
    std::size_t df;
    double score;
  };
  std::vector<Candidate> survivors;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& [term, f] : df) {
    if (f < static_cast<std::size_t>(std::max(min_doc_count, 0))) continue;
    slot.emplace(term, survivors.size());
    survivors.push_back({term, f, 0.0});
  }
  for (const auto& counts : doc_counts) {
    for (const auto& [tok, c] : counts) {
      auto it = slot.find(tok);
      if (it == slot.end()) continue;
      auto& cand = survivors[it->second];
      const double idf = std::log((1.0 + n) / (1.0 + static_cast<double>(cand.df))) + 1.0;
      cand.score = std::max(cand.score, static_cast<double>(c) * idf);
    }
  }

  if (survivors.size() < static_cast<std::size_t>(feature_budget))
    throw ValidationError("only " + std::to_string(survivors.size()) +
                          " tokens survive min_doc_count=" + std::to_string(min_doc_count) +
                          "; feature_budget=" + std::to_string(feature_budget) +
                          " is not achievable");

  std::sort(survivors.begin(), survivors.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.term < b.term;
  });
  survivors.resize(static_cast<std::size_t>(feature_budget));

  Vocabulary vocab;
  vocab.n_documents = corpus.size();
  vocab.ngram_max = ngram_max;
  for (auto& c : survivors) {
    vocab.terms.push_back(std::move(c.term));
    vocab.doc_frequencies.push_back(c.df);
    vocab.tfidf_scores.push_back(c.score);
  }
  return vocab;
}

void FeatureMatrix::validate() const {
  if (X.rows() != y.size()) throw ValidationError("X and y row counts differ");
  if (static_cast<std::size_t>(X.cols()) != feature_names.size())
    throw ValidationError("feature_names length differs from column count");
  if (!X.allFinite() || !y.allFinite()) throw ValidationError("feature matrix has non-finite entries");
}

FeatureMatrix FeatureMatrix::rows(const std::vector<std::size_t>& index) const {
  FeatureMatrix out;
  out.X.resize(static_cast<Eigen::Index>(index.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(index.size()));
  for (std::size_t r = 0; r < index.size(); ++r) {
    out.X.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(index[r]));
    out.y(static_cast<Eigen::Index>(r)) = y(static_cast<Eigen::Index>(index[r]));
  }
  out.feature_names = feature_names;
  return out;
}

FeatureMatrix vectorize(const Corpus& corpus, const Vocabulary& vocab, Weighting scheme) {
  std::unordered_map<std::string, Eigen::Index> column;
  for (std::size_t j = 0; j < vocab.size(); ++j) column.emplace(vocab.terms[j], static_cast<Eigen::Index>(j));

  FeatureMatrix m;
  m.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(corpus.size()),
                              static_cast<Eigen::Index>(vocab.size()));
  m.y.resize(static_cast<Eigen::Index>(corpus.size()));
  m.feature_names = vocab.terms;
  for (std::size_t s = 0; s < corpus.size(); ++s) {
    const auto row = static_cast<Eigen::Index>(s);
    for (const auto& tok : tokenize(corpus.documents[s], vocab.ngram_max)) {
      auto it = column.find(tok);
      if (it != column.end()) m.X(row, it->second) += 1.0;
    }
    m.y(row) = corpus.targets[s];
  }
  if (scheme == Weighting::tfidf)
    for (std::size_t j = 0; j < vocab.size(); ++j)
      m.X.col(static_cast<Eigen::Index>(j)) *= vocab.idf(j);
  m.validate();
  return m;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    // Unbiased draw from [0, i) by rejection.
    const std::uint64_t bound = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do r = rng();
    while (r >= limit);
    std::swap(perm[i - 1], perm[r % bound]);
  }
  return perm;
}

TrainTestSplit split(const FeatureMatrix& matrix, std::size_t n_train, std::uint64_t seed) {
  const std::size_t n = matrix.n();
  if (n_train == 0 || n_train >= n)
    throw ValidationError("n_train must satisfy 0 < n_train < n (n_train=" + std::to_string(n_train) +
                          ", n=" + std::to_string(n) + ")");
  const auto perm = seeded_permutation(n, seed);
  TrainTestSplit out;
  out.train_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.train = matrix.rows(out.train_rows);
  out.test = matrix.rows(out.test_rows);
  return out;
}

std::vector<FeatureVector> feature_columns(const FeatureMatrix& matrix) {
  std::vector<FeatureVector> out;
  out.reserve(matrix.d());
  for (std::size_t j = 0; j < matrix.d(); ++j) {
    FeatureVector f;
    f.values = matrix.X.col(static_cast<Eigen::Index>(j));
    f.name = j < matrix.feature_names.size() ? matrix.feature_names[j] : std::to_string(j);
    f.index = j;
    out.push_back(std::move(f));
  }
  return out;
}

Eigen::MatrixXd stack_columns(const std::vector<FeatureVector>& features) {
  if (features.empty()) return {};
  const Eigen::Index n = features.front().values.size();
  Eigen::MatrixXd F(n, static_cast<Eigen::Index>(features.size()));
  for (std::size_t j = 0; j < features.size(); ++j) {
    if (features[j].values.size() != n) throw ValidationError("feature vectors differ in length");
    F.col(static_cast<Eigen::Index>(j)) = features[j].values;
  }
  return F;
}

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
  m.validate();
  for (const auto& name : m.feature_names)
    if (name.find('\n') != std::string::npos)
      throw ValidationError("feature name contains a newline: " + name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  detail::put_magic(out, "PLFM");
  detail::put<std::uint32_t>(out, kMatrixVersion);
  detail::put<std::uint64_t>(out, m.n());
  detail::put<std::uint64_t>(out, m.d());
  for (Eigen::Index r = 0; r < m.X.rows(); ++r)
    for (Eigen::Index c = 0; c < m.X.cols(); ++c) detail::put<double>(out, m.X(r, c));
  for (Eigen::Index r = 0; r < m.y.size(); ++r) detail::put<double>(out, m.y(r));
  for (std::size_t j = 0; j < m.feature_names.size(); ++j) {
    if (j) out.put('\n');
    out << m.feature_names[j];
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open feature matrix " + path.string());
  detail::expect_magic(in, "PLFM");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kMatrixVersion)
    throw ParseError("unsupported feature matrix version " + std::to_string(version));
  const auto n = detail::get<std::uint64_t>(in, "n");
  const auto d = detail::get<std::uint64_t>(in, "D");
  FeatureMatrix m;
  m.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  m.y.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index r = 0; r < m.X.rows(); ++r)
    for (Eigen::Index c = 0; c < m.X.cols(); ++c) m.X(r, c) = detail::get<double>(in, "X");
  for (Eigen::Index r = 0; r < m.y.size(); ++r) m.y(r) = detail::get<double>(in, "y");
  std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (d > 0) {
    std::stringstream ss(rest);
    std::string name;
    while (std::getline(ss, name, '\n')) m.feature_names.push_back(name);
    if (rest.empty() || rest.back() == '\n') m.feature_names.push_back("");
  }
  if (m.feature_names.size() != d)
    throw ParseError("feature matrix lists " + std::to_string(m.feature_names.size()) +
                     " names for " + std::to_string(d) + " columns");
  m.validate();
  return m;
}

}  // namespace priorloom
