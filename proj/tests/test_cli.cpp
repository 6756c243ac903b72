#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workdir {
  fs::path path = fs::temp_directory_path() / fmt::format("incepto_cli_{}", ::getpid());
  Workdir() {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
};

const fs::path& workdir() {
  static const Workdir dir;
  return dir.path;
}

int run(const std::string& args) {
  const std::string cmd =
      fmt::format("cd '{}' && '{}' --log-level error {} > last.log 2>&1", workdir().string(), INCEPTO_CLI, args);
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(workdir() / p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

// one small dataset shared by the cases below
void ensure_archive() {
  if (fs::exists(workdir() / "segs.bin")) return;
  REQUIRE(run("synth --out walks --subjects 1 --timesteps 600 --noise 0.1 --seed 4") == 0);
  REQUIRE(run("preprocess --data walks --out segs.bin --seed 4") == 0);
}

}  // namespace

TEST_CASE("synth writes Physionet-style walks and a manifest") {
  ensure_archive();
  CHECK(fs::exists(workdir() / "walks" / "demographics.txt"));
  std::size_t walks = 0;
  for (const auto& e : fs::directory_iterator(workdir() / "walks"))
    if (e.path().filename().string().ends_with("_01.txt")) ++walks;
  CHECK(walks == 4);
  const json m = read_json("walks/manifest.json");
  CHECK(m["command"] == "synth");
  CHECK(m["config"]["seed"] == 4);
  CHECK(m["config"]["synth"]["timesteps"] == 600);
  const json p = read_json("segs.bin.manifest.json");
  CHECK(p["inputs"]["demographics"].contains("fnv1a64"));
}

TEST_CASE("config precedence: defaults < tiny < config file < flags") {
  ensure_archive();
  std::ofstream(workdir() / "cfg.json") << R"({"model": {"reduced_dim": 6, "dropout": 0.1}, "train": {"max_epochs": 1}})";
  REQUIRE(run("train --archive segs.bin --out prec --tiny --config cfg.json --dropout 0.3") == 0);
  const json c = read_json("prec/manifest.json")["config"];
  CHECK(c["model"]["filters_per_stream"] == 2);   // tiny
  CHECK(c["model"]["reduced_dim"] == 6);          // file over tiny
  CHECK(c["model"]["dropout"] == 0.3);            // flag over file
  CHECK(c["train"]["max_epochs"] == 1);
  CHECK(c["model"]["n_signals"] == 18);           // from the archive
  CHECK(c["train"]["learning_rate"] == 1e-4);     // default
}

TEST_CASE("a manifest reruns its command and reproduces the outputs") {
  ensure_archive();
  REQUIRE(run("crossval --archive segs.bin --out cv1 --tiny -k 2 --smote-k 2 --epochs 1 --seed 9") == 0);
  REQUIRE(run("crossval --archive segs.bin --out cv2 --config cv1/manifest.json") == 0);
  CHECK(slurp("cv1/report.json") == slurp("cv2/report.json"));
  CHECK(slurp("cv1/fold_01/best.ckpt") == slurp("cv2/fold_01/best.ckpt"));
  CHECK(run("train --archive segs.bin --out wrong --config cv1/manifest.json") == 2);
}

TEST_CASE("train then resume matches an uninterrupted run") {
  ensure_archive();
  REQUIRE(run("train --archive segs.bin --out straight --tiny --epochs 4 --patience 10 --seed 2") == 0);
  REQUIRE(run("train --archive segs.bin --out split --tiny --epochs 2 --patience 10 --seed 2") == 0);
  REQUIRE(run("train --archive segs.bin --out split --tiny --epochs 4 --patience 10 --seed 2 --resume") == 0);
  for (const char* f : {"best.ckpt", "last.ckpt", "history.csv", "summary.json"}) {
    CAPTURE(f);
    CHECK(slurp(fs::path("straight") / f) == slurp(fs::path("split") / f));
  }
}

TEST_CASE("report reads a run directory and renders the heat map") {
  ensure_archive();
  if (!fs::exists(workdir() / "cv1"))
    REQUIRE(run("crossval --archive segs.bin --out cv1 --tiny -k 2 --smote-k 2 --epochs 1") == 0);
  REQUIRE(run("report cv1 --svg heat.svg") == 0);
  CHECK(slurp("heat.svg").starts_with("<svg"));
  CHECK(slurp("last.log").find("accuracy") != std::string::npos);
}

TEST_CASE("gradcheck passes and fails loudly under a corrupted backward") {
  CHECK(run("gradcheck") == 0);
  CHECK(slurp("last.log").find("\"pass\":true") != std::string::npos);
  CHECK(run("gradcheck --corrupt conv1d") == 4);
  CHECK(slurp("last.log").find("\"pass\":false") != std::string::npos);
  CHECK(run("gradcheck --corrupt no_such_op") == 2);
}

TEST_CASE("exit codes") {
  ensure_archive();
  CHECK(run("") == 2);                                                      // no subcommand
  CHECK(run("train --archive segs.bin") == 2);                              // missing --out
  CHECK(run("train --archive segs.bin --out x --epochs nope") == 2);        // bad value
  std::ofstream(workdir() / "bad.json") << R"({"model": {"no_such_key": 1}})";
  CHECK(run("train --archive segs.bin --out x --config bad.json") == 2);    // unknown key
  std::ofstream(workdir() / "junk.bin") << "not an archive";
  CHECK(run("crossval --archive junk.bin --out x") == 3);                   // bad format
  CHECK(run("crossval --archive missing.bin --out x") == 1);                // missing file
  CHECK(run("crossval --archive segs.bin --out x --tiny --signals 3") == 2);  // channel mismatch
  CHECK(run("preprocess --out y.bin --data does_not_exist") != 0);
}
