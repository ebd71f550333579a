#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "latentwarp/image_io.hpp"
#include "latentwarp/mock_backends.hpp"
#include "latentwarp/random.hpp"
#include "latentwarp/serialization.hpp"
#include "latentwarp/session_store.hpp"
#include "latentwarp/trajectory.hpp"

using namespace latentwarp;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("latentwarp_io_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("png round trip is exact for 8-bit images") {
  Image img(3, 5, 7);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = hash_uniform({i});
  const Image q = quantize_8bit(img);
  CHECK(max_abs_diff(q, img) <= 0.5 / 255.0 + 1e-12);
  CHECK(decode_png(encode_png(q)) == q);
  CHECK(encode_png(q) == encode_png(img));
  CHECK_THROWS_AS(decode_png({1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(encode_png(Grid(2, 4, 4)), std::invalid_argument);
}

TEST_CASE("base64 known vectors") {
  const std::string s = "foobar";
  for (std::size_t n = 0; n <= s.size(); ++n) {
    const std::vector<std::uint8_t> bytes(s.begin(), s.begin() + static_cast<long>(n));
    CHECK(base64_decode(base64_encode(bytes)) == bytes);
  }
  CHECK(base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}) == "Zm9vYg==");
  CHECK(base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b', 'a', 'r'}) == "Zm9vYmFy");
  CHECK_THROWS_AS(base64_decode("Zm9v!"), std::invalid_argument);
}

TEST_CASE("float32 packing is little-endian channel-major") {
  Grid g(2, 1, 2);
  g(0, 0, 0) = 1.0;
  g(1, 0, 1) = -2.0;
  const auto bytes = pack_float32(g);
  REQUIRE(bytes.size() == 16);
  CHECK(bytes[0] == 0x00);
  CHECK(bytes[3] == 0x3f);
  CHECK(bytes[15] == 0xc0);
  CHECK(unpack_float32(bytes, g.shape()) == g);
  CHECK_THROWS_AS(unpack_float32(bytes, {1, 1, 2}), std::invalid_argument);
}

TEST_CASE("latent dumps carry their own layout description") {
  const fs::path dir = scratch("dump");
  fs::create_directories(dir);
  Grid g = normal_grid({4, 3, 5}, 1);
  write_latent_dump(dir / "z", g);
  CHECK(fs::file_size(dir / "z.f32") == 4u * 3 * 5 * 4);
  std::ifstream meta(dir / "z.json");
  const auto j = nlohmann::json::parse(meta);
  CHECK(j["shape"] == nlohmann::json({4, 3, 5}));
  CHECK(j["dtype"] == "float32");
  CHECK(j["byte_order"] == "little");
  CHECK(j["channel_order"] == "CHW");
  CHECK(max_abs_diff(read_latent_dump(dir / "z"), g) < 1e-6);
  fs::remove_all(dir);
}

TEST_CASE("trajectory documents") {
  const auto t = parse_trajectory(R"([
    {"translation": [0, 0, 0.5], "euler": [0, 0, 0]},
    {"translation": [0, 0, 0.5], "euler": [10, 0, 0], "prompt": "a night city", "config": {"sigma": "inf", "lambda": 0}}
  ])");
  REQUIRE(t.size() == 2);
  CHECK(t[0] == forward_entry(0.5));
  CHECK(t[1].prompt == std::optional<std::string>("a night city"));
  CHECK(std::isinf(*t[1].overrides.sigma));
  CHECK(parse_trajectory(trajectory_to_text(t)) == t);

  auto error_for = [](const char* text) {
    try {
      parse_trajectory(text);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error_for(R"([{"translation": [0,0,1], "euler": [0,0,0]}, {"translation": [0,0]}])").find("trajectory[1]") != std::string::npos);
  CHECK(error_for(R"([{"translation": [0,0,1], "euler": [0,0,0], "rotation": [1,0,0,0,1,0,0,0,1]}])").find("trajectory[0]") != std::string::npos);
  CHECK(error_for(R"([{"translation": [0,0,1], "rotation": [2,0,0,0,1,0,0,0,1]}])") != "");
  CHECK(error_for(R"([{"translation": [0,0,1], "euler": [0,0,0], "speed": 3}])").find("speed") != std::string::npos);
  CHECK(error_for(R"({"translation": [0,0,1]})") != "");
  CHECK(error_for("[") != "");
}

TEST_CASE("config json round trip and strictness") {
  PipelineConfig c;
  c.sigma = std::numeric_limits<double>::infinity();
  c.injection_sites = std::vector<std::string>{"mid.attn"};
  c.seed = 42;
  const auto j = to_json(c);
  CHECK(j["sigma"] == "inf");
  CHECK(apply_config_json(PipelineConfig{}, j) == c);
  CHECK(std::isinf(apply_config_json(PipelineConfig{}, {{"sigma", nullptr}}).sigma));
  CHECK_THROWS_AS(apply_config_json(PipelineConfig{}, {{"sigmaa", 3}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_json(PipelineConfig{}, {{"t1", 22}}), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_json(PipelineConfig{}, {{"lambda", "big"}}), std::invalid_argument);
}

TEST_CASE("session store records, replays and detects tampering") {
  MockSuiteOptions o;
  o.denoiser = MockDenoiserKind::linear;
  Pipeline p(make_mock_suite(o));
  PipelineConfig cfg;
  cfg.latent_shape = {4, 16, 16};
  const fs::path dir = scratch("store");
  const SessionStart start{"a lighthouse", std::nullopt};
  const SessionStore store = SessionStore::create(dir, cfg, start, p.backends().name);
  CHECK_THROWS(SessionStore::create(dir, cfg, start, p.backends().name));

  SessionState s = p.init_session(start, cfg);
  store.write_frame(0, s.current_image);
  std::vector<TrajectoryEntry> traj(3, forward_entry(0.4));
  traj[1].prompt = "a lighthouse at night";
  for (const auto& e : traj) {
    const Frame f = p.step(s, e);
    store.write_frame(f.index, f.image);
    store.write_latent(f.index, f.latent);
  }
  store.write_log(s.log);
  CHECK(store.frame_path(3).filename() == "frame_00003.png");

  const SessionStore again = SessionStore::open(dir);
  CHECK(again.config() == cfg);
  CHECK(again.start_prompt() == "a lighthouse");
  CHECK(again.backend_name() == "mock-linear");
  CHECK(again.load_log() == traj);
  CHECK(again.stored_frame_count() == 4);
  CHECK(read_png(again.frame_path(3)) == s.current_image);

  const ReplayReport ok = replay_session(p, dir);
  CHECK(ok.identical());
  CHECK(ok.frames_compared == 4);

  Image altered = read_png(again.frame_path(2));
  altered(0, 0, 0) = altered(0, 0, 0) > 0.5 ? 0.0 : 1.0;
  write_png(again.frame_path(2), altered);
  const ReplayReport bad = replay_session(p, dir);
  CHECK_FALSE(bad.identical());
  CHECK(bad.mismatched == std::vector<int>{2});
  fs::remove_all(dir);
  CHECK_THROWS(SessionStore::open(dir));
}
