#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ndvg/checkpoint.hpp"
#include "ndvg/cli.hpp"
#include "ndvg/image.hpp"

using namespace ndvg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("ndvg_cli_test_" + std::to_string(++counter) + "_" +
            std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

struct RunResult {
  int code;
  std::string out, err;
};

RunResult run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream o(path);
  o << text;
}

const char* kToyConfig = R"(# toy-scale run
coarse_iters = 4
fine_iters = 4
rays_per_iter = 64
deform_voxels_coarse = 343
deform_voxels_fine = 729
canon_voxels_coarse = 512
canon_voxels_fine = 1000
deform_channels = 6
mask_res = 6
k_target_coarse = 32
k_target_fine = 48
log_every = 1000
)";

}  // namespace

TEST_CASE("an empty invocation prints usage and fails") {
  const RunResult r = run({});
  CHECK(r.code == 1);
  CHECK(r.err.find("error: usage") != std::string::npos);
  CHECK(r.err.find("gen-scene") != std::string::npos);  // help text lists subcommands
  CHECK(r.err.find("train") != std::string::npos);
}

TEST_CASE("help is a successful invocation") {
  const RunResult r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("render") != std::string::npos);
  CHECK(r.err.empty());
}

TEST_CASE("unknown flags, commands and missing requirements are usage errors") {
  CHECK(run({"train", "--bogus", "x"}).code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  const RunResult r = run({"train", "--data", "somewhere"});  // --out missing
  CHECK(r.code == 1);
  CHECK(r.err.find("error: usage") != std::string::npos);
}

TEST_CASE("the full pipeline runs end to end at toy scale") {
  TempDir work;
  const std::string ds = work.file("ds");
  const std::string out = work.file("run");

  // ---- dataset generation
  RunResult r = run({"gen-scene", "--spec", "static", "--out", ds, "--views", "5", "--times",
                     "2", "--test-views", "2", "--width", "20", "--height", "20", "--seed",
                     "4"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(fs::path(ds) / "transforms_train.json"));
  CHECK(fs::exists(fs::path(ds) / "transforms_test.json"));
  CHECK(fs::exists(fs::path(ds) / "train" / "r_000.png"));

  // ---- training with a config file plus command-line overrides
  write_text(work.file("toy.cfg"), kToyConfig);
  r = run({"train", "--data", ds, "--out", out, "--config", work.file("toy.cfg"), "--set",
           "rays_per_iter=96", "--seed", "11"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("checkpoints written") != std::string::npos);
  REQUIRE(fs::exists(fs::path(out) / "fine.ckpt"));
  CHECK(fs::exists(fs::path(out) / "coarse.ckpt"));
  CHECK(fs::exists(fs::path(out) / "loss.csv"));

  // precedence: defaults < config file < --set < --seed flag
  const LoadedCheckpoint lc = load_checkpoint((fs::path(out) / "fine.ckpt").string());
  CHECK(lc.extra.config.at("coarse_iters") == "4");    // from the file
  CHECK(lc.extra.config.at("rays_per_iter") == "96");  // --set beats the file
  CHECK(lc.extra.config.at("seed") == "11");           // --seed beats both

  // ---- metrics over the held-out split
  const std::string fine = (fs::path(out) / "fine.ckpt").string();
  r = run({"eval", "--ckpt", fine, "--data", ds, "--split", "test", "--out",
           work.file("metrics.csv")});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("mean PSNR") != std::string::npos);
  CHECK(r.out.find("mean SSIM") != std::string::npos);
  const std::string csv = read_file(work.file("metrics.csv"));
  CHECK(csv.rfind("frame,psnr,ssim\n", 0) == 0);
  CHECK(csv.find("\n0,") != std::string::npos);
  CHECK(csv.find("\n1,") != std::string::npos);

  // repeated evaluation is identical
  const RunResult again = run({"eval", "--ckpt", fine, "--data", ds, "--split", "test",
                               "--out", work.file("metrics2.csv")});
  CHECK(again.out == r.out);
  CHECK(read_file(work.file("metrics2.csv")) == csv);

  // ---- rendering a dataset frame
  r = run({"render", "--ckpt", fine, "--data", ds, "--split", "test", "--frame", "1",
           "--out", work.file("frame.png")});
  REQUIRE(r.code == 0);
  const Image frame_img = load_png(work.file("frame.png"), Vec3f(0, 0, 0));
  CHECK(frame_img.width == 20);
  CHECK(frame_img.height == 20);

  // ---- rendering a free pose with its own size and time
  write_text(work.file("pose.json"), R"({
    "camera_angle_x": 0.6911,
    "w": 24, "h": 18, "time": 1.0,
    "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,3.5],[0,0,0,1]]
  })");
  r = run({"render", "--ckpt", fine, "--pose-file", work.file("pose.json"), "--out",
           work.file("pose.png")});
  REQUIRE(r.code == 0);
  const Image pose_img = load_png(work.file("pose.png"), Vec3f(0, 0, 0));
  CHECK(pose_img.width == 24);
  CHECK(pose_img.height == 18);

  // ---- usage failures around render inputs
  r = run({"render", "--ckpt", fine, "--data", ds, "--frame", "0", "--time", "1.5", "--out",
           work.file("x.png")});
  CHECK(r.code == 1);
  CHECK(r.err.find("error: usage") != std::string::npos);
  CHECK(run({"render", "--ckpt", fine, "--out", work.file("x.png")}).code == 1);
  CHECK(run({"render", "--ckpt", fine, "--pose-file", work.file("pose.json"), "--frame", "0",
             "--data", ds, "--out", work.file("x.png")})
            .code == 1);
  CHECK(run({"render", "--ckpt", fine, "--frame", "0", "--out", work.file("x.png")}).code ==
        1);
  r = run({"render", "--ckpt", fine, "--data", ds, "--split", "test", "--frame", "9",
           "--out", work.file("x.png")});
  CHECK(r.code == 1);
  CHECK(r.err.find("outside the test split") != std::string::npos);

  // ---- config failures
  r = run({"train", "--data", ds, "--out", work.file("bad"), "--set", "warp_speed=9"});
  CHECK(r.code == 2);
  CHECK(r.err.find("error: config") != std::string::npos);
  CHECK(r.err.find("warp_speed") != std::string::npos);
  r = run({"train", "--data", ds, "--out", work.file("bad"), "--set", "no_equals_sign"});
  CHECK(r.code == 1);
  CHECK(r.err.find("error: usage") != std::string::npos);

  // ---- data and io failures
  r = run({"eval", "--ckpt", fine, "--data", work.file("nowhere")});
  CHECK(r.code == 2);
  CHECK(r.err.find("error: data") != std::string::npos);
  r = run({"render", "--ckpt", work.file("missing.ckpt"), "--pose-file",
           work.file("pose.json"), "--out", work.file("x.png")});
  CHECK(r.code == 2);
  CHECK(r.err.find("error: io") != std::string::npos);
}

TEST_CASE("training through the cli is reproducible for a fixed seed") {
  TempDir work;
  const std::string ds = work.file("ds");
  REQUIRE(run({"gen-scene", "--spec", "translating-sphere", "--out", ds, "--views", "4",
               "--times", "2", "--test-views", "1", "--width", "16", "--height", "16"})
              .code == 0);
  write_text(work.file("toy.cfg"), kToyConfig);
  const std::vector<std::string> base{"train", "--data", ds, "--config", work.file("toy.cfg"),
                                      "--seed", "21", "--threads", "1"};
  auto with_out = [&](const std::string& out) {
    std::vector<std::string> a = base;
    a.push_back("--out");
    a.push_back(out);
    return a;
  };
  REQUIRE(run(with_out(work.file("a"))).code == 0);
  REQUIRE(run(with_out(work.file("b"))).code == 0);
  CHECK(read_file(work.file("a/loss.csv")) == read_file(work.file("b/loss.csv")));
  CHECK(read_file(work.file("a/coarse.ckpt")) == read_file(work.file("b/coarse.ckpt")));
  CHECK(read_file(work.file("a/fine.ckpt")) == read_file(work.file("b/fine.ckpt")));
}
