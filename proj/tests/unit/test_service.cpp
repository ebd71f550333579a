#include <chrono>
#include <filesystem>
#include <future>
#include <mutex>
#include <thread>
#include <unistd.h>

#include "doctest.h"
#include "gated_denoiser.hpp"
#include "json.hpp"
#include "latentwarp/errors.hpp"
#include "latentwarp/image_io.hpp"
#include "latentwarp/mock_backends.hpp"
#include "latentwarp/serialization.hpp"
#include "latentwarp/service.hpp"
#include "latentwarp/session_store.hpp"

// After Eigen: resolv.h defines a _res macro that collides with Eigen internals.
#include "httplib.h"

using namespace latentwarp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

BackendSuite linear_suite() {
  MockSuiteOptions o;
  o.denoiser = MockDenoiserKind::linear;
  return make_mock_suite(o);
}

ServiceOptions small_options() {
  ServiceOptions o;
  o.base_config.latent_shape = {4, 16, 16};
  return o;
}

class BrokenDepth final : public DepthEstimator {
 public:
  explicit BrokenDepth(std::shared_ptr<const DepthEstimator> inner) : inner_(std::move(inner)) {}
  DepthMap estimate(const Image& image) const override {
    if (calls_++ > 0) throw std::runtime_error("depth model crashed");
    return inner_->estimate(image);
  }

 private:
  std::shared_ptr<const DepthEstimator> inner_;
  mutable int calls_ = 0;
};

const std::string kStep = R"({"pose": {"translation": [0, 0, 0.5], "euler": [0, 0, 0]}})";

std::string create_body(const std::string& prompt) { return json{{"prompt", prompt}}.dump(); }

}  // namespace

TEST_CASE("create, step, inspect and delete a session") {
  SessionService svc(linear_suite(), small_options());
  const HttpReply created = svc.create_session(create_body("a red canyon"));
  REQUIRE(created.status == 200);
  const json c = json::parse(created.body);
  const std::string id = c["session_id"];
  CHECK(c["frame_index"] == 0);

  const HttpReply stepped = svc.step(id, R"({"pose": {"translation": [0, 0, 0.5], "euler": [0, 0, 0]}, "prompt": "a red canyon at dusk", "config": {"lambda": 100}})");
  REQUIRE(stepped.status == 200);
  const json s = json::parse(stepped.body);
  CHECK(s["frame_index"] == 1);
  CHECK(s["prompt"] == "a red canyon at dusk");
  CHECK(s["timing_ms"].contains("denoise"));
  CHECK(s["hole_fraction"].get<double>() > 0.0);

  const HttpReply frame = svc.get_frame(id, 1);
  CHECK(frame.content_type == "image/png");
  CHECK(base64_encode(std::vector<std::uint8_t>(frame.body.begin(), frame.body.end())) == s["image"]);

  const json info = json::parse(svc.get_session(id).body);
  CHECK(info["frame_index"] == 1);
  CHECK(info["trajectory"].size() == 1);
  CHECK(info["trajectory"][0]["config"]["lambda"] == 100.0);

  CHECK(svc.delete_session(id).status == 200);
  CHECK(svc.session_count() == 0);
  CHECK(svc.get_session(id).status == 404);
}

TEST_CASE("error mapping") {
  SessionService svc(linear_suite(), small_options());
  CHECK(svc.step("missing", kStep).status == 404);
  CHECK(svc.get_frame("missing", 0).status == 404);
  CHECK(svc.delete_session("missing").status == 404);
  CHECK(svc.create_session("{").status == 400);
  CHECK(svc.create_session("{}").status == 400);
  CHECK(svc.create_session(R"({"prompt": "x", "config": {"warp_speed": 9}})").status == 400);
  CHECK(svc.create_session(R"({"image": "not base64!"})").status == 400);

  const std::string id = json::parse(svc.create_session(create_body("x")).body)["session_id"];
  CHECK(svc.step(id, "{}").status == 400);
  CHECK(svc.step(id, R"({"pose": {"translation": [0, 0]}})").status == 400);
  CHECK(svc.step(id, R"({"pose": {"translation": [0, 0, 1], "euler": [0, 0, 0]}, "config": {"t1": 7}})").status == 400);
  CHECK(svc.get_frame(id, 1).status == 404);
  CHECK(json::parse(svc.get_session(id).body)["frame_index"] == 0);

  BackendSuite broken = linear_suite();
  broken.depth_estimator = std::make_shared<BrokenDepth>(broken.depth_estimator);
  SessionService failing(broken, small_options());
  const std::string fid = json::parse(failing.create_session(create_body("x")).body)["session_id"];
  const HttpReply r = failing.step(fid, kStep);
  CHECK(r.status == 500);
  CHECK(json::parse(r.body)["stage"] == "depth");
  CHECK(json::parse(failing.get_session(fid).body)["frame_index"] == 0);
}

TEST_CASE("image start") {
  SessionService svc(linear_suite(), small_options());
  Image img(3, 16, 16, 0.5);
  const json body = {{"image", base64_encode(encode_png(img))}};
  const HttpReply r = svc.create_session(body.dump());
  REQUIRE(r.status == 200);
  CHECK(json::parse(r.body)["image"] == base64_encode(encode_png(img)));
  const json wrong = {{"image", base64_encode(encode_png(Image(3, 8, 8)))}};
  CHECK(svc.create_session(wrong.dump()).status == 400);
}

TEST_CASE("a second step while one is in flight gets exactly one 409") {
  BackendSuite b = linear_suite();
  auto gate = std::make_shared<testing_support::GatedDenoiser>(b.denoiser);
  b.denoiser = gate;
  SessionService svc(b, small_options());
  const std::string id = json::parse(svc.create_session(create_body("x")).body)["session_id"];

  gate->arm();
  auto first = std::async(std::launch::async, [&] { return svc.step(id, kStep); });
  gate->wait_entered();
  const HttpReply second = svc.step(id, kStep);
  const HttpReply del = svc.delete_session(id);
  gate->release();
  const HttpReply done = first.get();
  CHECK(done.status == 200);
  CHECK(second.status == 409);
  CHECK(del.status == 409);
  CHECK(svc.step(id, kStep).status == 200);
  CHECK(json::parse(svc.get_session(id).body)["frame_index"] == 2);
}

TEST_CASE("HTTP round trip is byte-deterministic and replayable from disk") {
  const fs::path data = fs::temp_directory_path() / ("latentwarp_service_" + std::to_string(::getpid()));
  fs::remove_all(data);

  auto run = [&](std::optional<fs::path> dir) {
    ServiceOptions o = small_options();
    o.data_dir = dir;
    SessionService svc(linear_suite(), o);
    HttpServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    server.start();
    httplib::Client client("127.0.0.1", port);
    std::vector<std::string> images;
    auto created = client.Post("/sessions", create_body("an orchard"), "application/json");
    REQUIRE(created);
    REQUIRE(created->status == 200);
    const json c = json::parse(created->body);
    const std::string id = c["session_id"];
    images.push_back(c["image"]);
    for (int i = 0; i < 3; ++i) {
      auto r = client.Post("/sessions/" + id + "/step", kStep, "application/json");
      REQUIRE(r);
      REQUIRE(r->status == 200);
      images.push_back(json::parse(r->body)["image"]);
    }
    auto frame = client.Get("/sessions/" + id + "/frames/3");
    REQUIRE(frame);
    CHECK(frame->status == 200);
    CHECK(base64_encode(std::vector<std::uint8_t>(frame->body.begin(), frame->body.end())) == images.back());
    auto racing = client.Post("/sessions/nope/step", kStep, "application/json");
    REQUIRE(racing);
    CHECK(racing->status == 404);
    auto del = client.Delete("/sessions/" + id);
    REQUIRE(del);
    CHECK(del->status == 200);
    server.stop();
    return std::make_pair(id, images);
  };

  const auto [id, first] = run(data);
  const auto [other_id, second] = run(std::nullopt);
  CHECK(first == second);
  CHECK(id != other_id);

  MockSuiteOptions o;
  o.denoiser = MockDenoiserKind::linear;
  const ReplayReport report = replay_session(Pipeline(make_mock_suite(o)), data / id);
  CHECK(report.identical());
  CHECK(report.frames_compared == 4);
  fs::remove_all(data);
}
