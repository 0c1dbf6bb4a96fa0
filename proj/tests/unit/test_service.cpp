#include <doctest.h>

#include <atomic>
#include <thread>

#include "helpers.hpp"
#include "priorloom/errors.hpp"
#include "priorloom/http_server.hpp"
#include "priorloom/service.hpp"

// after Eigen: resolv.h defines _res
#include <httplib.h>

using namespace priorloom;

namespace {

SessionConfig small_config() {
  SessionConfig cfg;
  cfg.metric.rank = 4;
  cfg.embedding.perplexity = 4;
  cfg.embedding.max_iters = 100;
  cfg.kernel_grid = {0.5, 2.0};
  cfg.cv_folds = 3;
  return cfg;
}

// Data directory with a train and a test matrix.
struct Fixture {
  testing::TempDir dir{"svc"};
  FeatureMatrix train, test;
  Fixture() {
    const auto parts = split(testing::random_dataset(60, 12, 4), 20, 1);
    train = parts.train;
    test = parts.test;
    write_feature_matrix(dir.path() / "train.plfm", train);
    write_feature_matrix(dir.path() / "test.plfm", test);
  }
};

// Runs an HttpServer on a free port for the lifetime of the object.
struct LiveServer {
  HttpServer server;
  int port;
  std::thread thread;
  LiveServer(SessionService& svc) : server(svc, ServerOptions{"127.0.0.1", 0, 30}), port(server.bind()) {
    thread = std::thread([this] { server.listen(); });
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
};

Eigen::MatrixXd coords_of(const nlohmann::json& records) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(records.size()), 2);
  for (const auto& r : records) {
    c(r.at("index").get<Eigen::Index>(), 0) = r.at("x").get<double>();
    c(r.at("index").get<Eigen::Index>(), 1) = r.at("y").get<double>();
  }
  return c;
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("datasets are discovered in the data directory") {
  Fixture fx;
  SessionService svc(fx.dir.path());
  const auto ds = svc.datasets();
  REQUIRE(ds.size() == 2);
  CHECK(ds[0].id == "test");
  CHECK(ds[1].id == "train");
  CHECK(ds[1].n == 20);
  CHECK(ds[1].d == 12);
  const auto again = svc.register_dataset("train.plfm", std::string("alias"));
  CHECK(again.id == "alias");
  CHECK(svc.datasets().size() == 3);
  CHECK_THROWS_AS(svc.register_dataset("missing.plfm"), NotFoundError);

  SessionService rel(std::filesystem::relative(fx.dir.path()));
  CHECK(rel.datasets().size() == 2);
}

TEST_CASE("sessions match direct library calls") {
  Fixture fx;
  SessionService svc(fx.dir.path());
  const auto cfg = small_config();
  const auto a = svc.create_session("train", cfg);
  const auto b = svc.create_session("train", cfg);
  CHECK(a.id != b.id);
  CHECK(a.round == 0);

  auto direct = start_session(read_feature_matrix(fx.dir.path() / "train.plfm"), cfg);
  CHECK(a.layout.coords == direct.layout.coords);
  CHECK(a.names == fx.train.feature_names);

  const std::vector<FeedbackPair> batch{FeedbackPair::make(0, 3, FeedbackLabel::similar),
                                        FeedbackPair::make(1, 2, FeedbackLabel::dissimilar)};
  CHECK(svc.post_feedback(a.id, batch) == 1);
  direct = submit_feedback(direct, batch);
  direct = refresh_visualization(direct);
  CHECK(svc.refresh(a.id).coords == direct.layout.coords);
  const auto unchanged = svc.refresh(a.id);
  CHECK(unchanged.coords == direct.layout.coords);

  const auto m1 = svc.metrics(a.id, std::string("test"));
  const auto m2 = svc.metrics(a.id, std::string("test"));
  CHECK(m1.round == 1);
  CHECK(m1.layout_round == 1);
  CHECK(m1.feedback_count == 2);
  REQUIRE(m1.mse);
  CHECK(*m1.mse == finalize_and_fit(direct, fx.test).test_mse);
  CHECK(*m1.mse == *m2.mse);
  CHECK(svc.metrics(b.id).round == 0);
  CHECK_FALSE(svc.metrics(b.id).mse);

  const auto snap = svc.snapshot(a.id);
  CHECK(snap == fx.dir.path() / "snapshots" / a.id);
  CHECK(std::filesystem::exists(snap / "metric.json"));
}

TEST_CASE("service errors") {
  Fixture fx;
  SessionService svc(fx.dir.path());
  CHECK_THROWS_AS(svc.create_session("nope"), NotFoundError);
  CHECK_THROWS_AS(svc.layout("s99"), NotFoundError);
  CHECK_THROWS_AS(svc.refresh("s99"), NotFoundError);
  const auto s = svc.create_session("train", small_config());
  CHECK_THROWS_AS(svc.post_feedback(s.id, {}), ValidationError);
  CHECK_THROWS_AS(svc.post_feedback(s.id, {FeedbackPair{0, 40, FeedbackLabel::similar, 0}}), ValidationError);
  CHECK(svc.metrics(s.id).round == 0);
}

TEST_CASE("feedback body formats") {
  const auto arr = parse_feedback_body(R"([{"i":1,"j":0,"label":"similar"},{"i":2,"j":3,"label":"dissimilar"}])");
  REQUIRE(arr.size() == 2);
  CHECK(arr[0] == FeedbackPair::make(0, 1, FeedbackLabel::similar));
  const auto lines = parse_feedback_body("{\"i\":1,\"j\":0,\"label\":\"similar\"}\n\n{\"i\":2,\"j\":3,\"label\":\"dissimilar\"}\n");
  CHECK(lines == arr);
  CHECK(parse_feedback_body(R"({"i":4,"j":5,"label":"similar","round":2})").size() == 1);
  CHECK_THROWS_WITH_AS(parse_feedback_body("  \n"), "no feedback in batch", ValidationError);
  CHECK_THROWS_AS(parse_feedback_body(R"({"i":1,"j":1,"label":"similar"})"), ValidationError);
  CHECK_THROWS_AS(parse_feedback_body(R"({"i":1,"j":2,"label":"alike"})"), ValidationError);
}

TEST_CASE("http routes") {
  Fixture fx;
  SessionService svc(fx.dir.path());
  LiveServer live(svc);
  auto cli = live.client();

  auto res = cli.Get("/datasets");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(nlohmann::json::parse(res->body).size() == 2);

  res = cli.Post("/datasets", R"({"path":"train.plfm","id":"t2"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(nlohmann::json::parse(res->body).at("id") == "t2");

  const nlohmann::json create{{"dataset", "train"}, {"config", to_json(small_config())}};
  res = cli.Post("/sessions", create.dump(), "application/json");
  REQUIRE(res);
  REQUIRE(res->status == 200);
  const auto created = nlohmann::json::parse(res->body);
  const std::string id = created.at("id");
  CHECK(created.at("round") == 0);
  CHECK(created.at("layout").size() == 12);
  CHECK(coords_of(created.at("layout")) == svc.layout(id).coords);

  res = cli.Post("/sessions", R"({"dataset":"none"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 404);
  CHECK(nlohmann::json::parse(res->body).contains("error"));

  res = cli.Get(("/sessions/" + id + "/layout").c_str());
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(layout_from_jsonl(res->body).coords == svc.layout(id).coords);

  const std::string fb = feedback_to_jsonl({FeedbackPair::make(0, 5, FeedbackLabel::similar)});
  res = cli.Post(("/sessions/" + id + "/feedback").c_str(), fb, "application/x-ndjson");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(nlohmann::json::parse(res->body).at("round") == 1);

  res = cli.Post(("/sessions/" + id + "/feedback").c_str(), R"({"i":2,"j":2,"label":"similar"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = cli.Post(("/sessions/" + id + "/feedback").c_str(), R"({"i":1,"j":2,"label":"same"})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  res = cli.Post(("/sessions/" + id + "/feedback").c_str(), "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
  CHECK(nlohmann::json::parse(res->body).at("error") == "no feedback in batch");

  res = cli.Post(("/sessions/" + id + "/refresh").c_str(), "", "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto refreshed = layout_from_jsonl(res->body);
  CHECK(refreshed.coords == svc.layout(id).coords);
  res = cli.Post(("/sessions/" + id + "/refresh").c_str(), "", "application/json");
  REQUIRE(res);
  CHECK((layout_from_jsonl(res->body).coords - refreshed.coords).cwiseAbs().maxCoeff() < 1e-6);

  res = cli.Get(("/sessions/" + id + "/metrics?test=test").c_str());
  REQUIRE(res);
  CHECK(res->status == 200);
  const auto metrics = nlohmann::json::parse(res->body);
  CHECK(metrics.at("round") == 1);
  CHECK(metrics.at("mse").get<double>() == *svc.metrics(id, std::string("test")).mse);
  res = cli.Get(("/sessions/" + id + "/metrics").c_str());
  REQUIRE(res);
  CHECK_FALSE(nlohmann::json::parse(res->body).contains("mse"));

  res = cli.Post(("/sessions/" + id + "/snapshot").c_str(),
                 nlohmann::json{{"dir", (fx.dir.path() / "snap").string()}}.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(std::filesystem::exists(fx.dir.path() / "snap" / "layout.jsonl"));

  res = cli.Get("/sessions/s999/layout");
  REQUIRE(res);
  CHECK(res->status == 404);
  res = cli.Post("/sessions", "not json", "application/json");
  REQUIRE(res);
  CHECK(res->status == 400);
}

TEST_CASE("concurrent clients against one session") {
  Fixture fx;
  SessionService svc(fx.dir.path());
  auto cfg = small_config();
  cfg.embedding.max_iters = 20;
  const auto id = svc.create_session("train", cfg).id;
  LiveServer live(svc);

  const int writers = 4, posts = 5, readers = 3;
  std::atomic<int> failures{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < writers; ++w)
    pool.emplace_back([&, w] {
      auto cli = live.client();
      for (int p = 0; p < posts; ++p) {
        const auto pair = FeedbackPair::make(static_cast<std::size_t>(w), static_cast<std::size_t>(5 + p),
                                             (p % 2) ? FeedbackLabel::similar : FeedbackLabel::dissimilar);
        auto res = cli.Post(("/sessions/" + id + "/feedback").c_str(), feedback_to_jsonl({pair}),
                            "application/x-ndjson");
        if (!res || res->status != 200) ++failures;
        if (p == 2) {
          res = cli.Post(("/sessions/" + id + "/refresh").c_str(), "", "application/json");
          if (!res || res->status != 200) ++failures;
        }
      }
    });
  for (int r = 0; r < readers; ++r)
    pool.emplace_back([&] {
      auto cli = live.client();
      for (int k = 0; k < 10; ++k) {
        auto res = cli.Get(("/sessions/" + id + "/layout").c_str());
        if (!res || res->status != 200 || layout_from_jsonl(res->body).coords.rows() != 12) ++failures;
        res = cli.Get(("/sessions/" + id + "/metrics").c_str());
        if (!res || res->status != 200) ++failures;
      }
    });
  for (auto& t : pool) t.join();
  CHECK(failures == 0);
  const auto m = svc.metrics(id);
  CHECK(m.round == writers * posts);
  CHECK(m.feedback_count == static_cast<std::size_t>(writers * posts));
}

}  // TEST_SUITE
