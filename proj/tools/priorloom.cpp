// Command-line entry points: ingest, simulate, stats, serve.
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "priorloom/corpus.hpp"
#include "priorloom/errors.hpp"
#include "priorloom/experiments.hpp"
#include "priorloom/http_server.hpp"
#include "priorloom/service.hpp"

using namespace priorloom;

namespace {

struct IngestArgs {
  std::string input, format = "tsv", output;
  int ngram = 1, min_doc_count = 2, features = 300;
  std::string weighting = "tfidf";
  std::size_t train_size = 0;
  std::uint64_t seed = 0;
};

int run_ingest(const IngestArgs& a) {
  const auto corpus = load_corpus(a.input, parse_corpus_format(a.format));
  const auto vocab = build_vocabulary(corpus, a.ngram, a.min_doc_count, a.features);
  const Weighting scheme = a.weighting == "counts" ? Weighting::counts : Weighting::tfidf;
  const auto matrix = vectorize(corpus, vocab, scheme);
  write_feature_matrix(a.output, matrix);
  std::cout << "wrote " << a.output << " (" << matrix.n() << " x " << matrix.d() << ")\n";
  if (a.train_size > 0) {
    const auto parts = split(matrix, a.train_size, a.seed);
    std::filesystem::path out(a.output);
    const auto stem = out.parent_path() / out.stem();
    write_feature_matrix(stem.string() + "_train.plfm", parts.train);
    write_feature_matrix(stem.string() + "_test.plfm", parts.test);
    std::cout << "wrote " << stem.string() << "_train.plfm and " << stem.string() << "_test.plfm\n";
  }
  return 0;
}

int run_simulate(const std::string& config_path, const std::string& mode, const std::string& out, int threads) {
  auto cfg = load_experiment_config(config_path);
  if (threads > 0) cfg.threads = threads;
  const auto curves = mode == "batch" ? run_batch_experiment(cfg) : run_sequential_experiment(cfg);
  emit_results(curves, cfg, out);
  for (const auto& c : curves) {
    std::printf("%-18s", c.label.c_str());
    for (double v : c.mean_mse) std::printf(" %.6g", v);
    std::printf("\n");
  }
  return 0;
}

int run_stats(const std::string& a_path, const std::string& b_path, int permutations, std::uint64_t seed) {
  const auto a = read_curve_csv(a_path);
  const auto b = read_curve_csv(b_path);
  if (a.x.empty() || b.x.empty()) throw ValidationError("curve files have no rows");
  auto last_row = [](const ResultCurve& c) {
    const Eigen::VectorXd row = c.per_repeat_mse.row(c.per_repeat_mse.rows() - 1);
    return std::vector<double>(row.data(), row.data() + row.size());
  };
  const auto ga = last_row(a), gb = last_row(b);
  const double p = permutation_test(ga, gb, permutations, seed);
  std::printf("%s mean %.6g (%zu repeats)\n%s mean %.6g (%zu repeats)\np = %.6g\n", a.label.c_str(),
              a.mean_mse.back(), ga.size(), b.label.c_str(), b.mean_mse.back(), gb.size(), p);
  return 0;
}

int run_serve(ServerOptions options, std::string data_dir) {
  if (const char* env = std::getenv("PRIOR_LOOM_DATA_DIR"); env && *env) data_dir = env;
  SessionService service(data_dir);
  HttpServer server(service, options);
  const int port = server.bind();
  std::cout << "serving on http://" << options.host << ":" << port << " (data dir: "
            << (data_dir.empty() ? "<none>" : data_dir) << ", " << service.datasets().size() << " datasets)"
            << std::endl;
  server.listen();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"priorloom: interactive prior elicitation for small-n regression"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ing = app.add_subcommand("ingest", "Build a feature matrix file from a labeled corpus");
  ing->add_option("--input", ingest.input, "Corpus file")->required();
  ing->add_option("--format", ingest.format, "tsv or jsonl")->capture_default_str();
  ing->add_option("--output", ingest.output, "Output .plfm file")->required();
  ing->add_option("--ngram", ingest.ngram, "Largest n-gram (1 or 2)")->capture_default_str();
  ing->add_option("--min-doc-count", ingest.min_doc_count, "Minimum document frequency")->capture_default_str();
  ing->add_option("--features", ingest.features, "Vocabulary size after pruning")->capture_default_str();
  ing->add_option("--weighting", ingest.weighting, "counts or tfidf")
      ->check(CLI::IsMember({"counts", "tfidf"}))
      ->capture_default_str();
  ing->add_option("--train-size", ingest.train_size, "Also write <output>_train/_test splits with this many rows");
  ing->add_option("--seed", ingest.seed, "Split seed")->capture_default_str();

  std::string sim_config, sim_mode = "sequential", sim_out = "results";
  int sim_threads = 0;
  auto* sim = app.add_subcommand("simulate", "Run a simulated-user experiment from a json config");
  sim->add_option("--config", sim_config, "Experiment config file")->required();
  sim->add_option("--mode", sim_mode, "batch or sequential")
      ->check(CLI::IsMember({"batch", "sequential"}))
      ->capture_default_str();
  sim->add_option("--out", sim_out, "Output directory for csv curves and manifest")->capture_default_str();
  sim->add_option("--threads", sim_threads, "Worker threads (overrides the config)");

  std::string stats_a, stats_b;
  int stats_perms = 100000;
  std::uint64_t stats_seed = 0;
  auto* st = app.add_subcommand("stats", "Permutation test on the last row of two emitted curves");
  st->add_option("a", stats_a, "First curve csv")->required();
  st->add_option("b", stats_b, "Second curve csv")->required();
  st->add_option("--permutations", stats_perms, "Number of label permutations")->capture_default_str();
  st->add_option("--seed", stats_seed, "Permutation seed")->capture_default_str();

  ServerOptions server_options;
  std::string data_dir;
  auto* srv = app.add_subcommand("serve", "Start the HTTP service");
  srv->add_option("--port", server_options.port, "Port (0 picks a free one)")->capture_default_str();
  srv->add_option("--host", server_options.host, "Bind address")->capture_default_str();
  srv->add_option("--data-dir", data_dir, "Directory of .plfm datasets (PRIOR_LOOM_DATA_DIR overrides)");
  srv->add_option("--timeout", server_options.timeout_seconds, "Request timeout in seconds")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ing) return run_ingest(ingest);
    if (*sim) return run_simulate(sim_config, sim_mode, sim_out, sim_threads);
    if (*st) return run_stats(stats_a, stats_b, stats_perms, stats_seed);
    if (*srv) return run_serve(server_options, data_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
