#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("simit_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

struct CmdResult {
  int code = -1;
  std::string out;
};

CmdResult run_cli(const std::string& args) {
  static const std::string bin = [] {
    const char* env = std::getenv("SIMIT_BIN");
    return std::string(env ? env : "./simit");
  }();
  fs::path capture =
      fs::temp_directory_path() / ("simit_cli_capture_" + std::to_string(::getpid()) + ".txt");
  std::string cmd = bin + " " + args + " >" + capture.string() + " 2>&1";
  int raw = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream in(capture);
  std::ostringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  fs::remove(capture);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tiny_gen(const std::string& root, int scenes = 8) {
  return "gen-data --out " + root + " --scenes " + std::to_string(scenes) +
         " --size 64 --classes 3 --seed 77";
}

const std::string kTinyNet =
    " --preset toy --batch-size 2 --base-width 4 --max-width 16 --head-width 8 --locations 8"
    " --ada off";

double parse_metric(const std::string& out, const std::string& name) {
  size_t at = out.find(name + ": ");
  REQUIRE(at != std::string::npos);
  return std::stod(out.substr(at + name.size() + 2));
}

}  // namespace

TEST_CASE("cli: gen-data reruns are byte-identical") {
  TempDir a("cli_gen_a"), b("cli_gen_b");
  CHECK(run_cli(tiny_gen(a.str())).code == 0);
  CHECK(run_cli(tiny_gen(b.str())).code == 0);

  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a.path))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a.path));
  CHECK(files.size() > 20);  // pngs for three streams plus the manifest
  for (const auto& rel : files) {
    REQUIRE(fs::exists(b.path / rel));
    CHECK(slurp(a.path / rel) == slurp(b.path / rel));
  }
}

TEST_CASE("cli: usage problems exit with code 2 and operational ones with 1") {
  TempDir d("cli_usage");
  CHECK(run_cli(tiny_gen(d.str())).code == 0);

  CmdResult bad_variant =
      run_cli("train --data " + d.str() + " --out " + d.str() + "/x --variant cyclegan");
  CHECK(bad_variant.code == 2);
  CHECK(bad_variant.out.find("simit-cs") != std::string::npos);

  CHECK(run_cli("gen-data --scenes 4").code == 2);  // --out missing, no env var
  CHECK(run_cli("evaluate --metric vibes --ref a --test b").code == 2);
  CHECK(run_cli("translate --ckpt x --data y --mode sideways --out z").code == 2);
  CHECK(run_cli("").code != 0);  // a subcommand is required

  CmdResult bad_crop = run_cli("train --data " + d.str() + " --out " + d.str() + "/x" + kTinyNet +
                               " --crop 72 --epochs 1");
  CHECK(bad_crop.code == 2);
  CHECK(bad_crop.out.find("divisible by 16") != std::string::npos);

  CmdResult missing = run_cli("evaluate --metric fid --ref " + d.str() + "/nowhere --test " +
                              d.str() + "/paired/images/train");
  CHECK(missing.code == 1);
  CHECK(missing.out.find("not a directory") != std::string::npos);

  CmdResult no_ckpt = run_cli("translate --ckpt " + d.str() + "/none.ckpt --data " + d.str() +
                              " --mode label2image --out " + d.str() + "/t");
  CHECK(no_ckpt.code == 1);
}

TEST_CASE("cli: kid of a directory against itself is zero") {
  TempDir d("cli_kid");
  CHECK(run_cli(tiny_gen(d.str())).code == 0);
  CmdResult r = run_cli("evaluate --metric kid --ref " + d.str() + "/paired/images/train" +
                        " --test " + d.str() + "/paired/images/train");
  CHECK(r.code == 0);
  CHECK(std::abs(parse_metric(r.out, "kid")) <= 1e-6);
}

TEST_CASE("cli: config file values yield to explicit flags") {
  TempDir d("cli_cfg");
  CHECK(run_cli(tiny_gen(d.str())).code == 0);
  std::ofstream(d.path / "cfg.json")
      << R"({"variant":"simit-c","epochs":9,"batch_size":2,"crop":64,"num_locations":8,)"
      << R"("base_width":4,"max_width":16,"head_width":8,"ada":false,"lambda_G":2.5})";

  std::string out = d.str() + "/run";
  CmdResult r = run_cli("train --data " + d.str() + " --out " + out + " --config " + d.str() +
                        "/cfg.json --epochs 1 --seed 3");
  CHECK(r.code == 0);

  std::string echo = slurp(fs::path(out) / "config.json");
  CHECK(echo.find("\"epochs\": 1") != std::string::npos);        // flag wins
  CHECK(echo.find("\"lambda_G\": 2.5") != std::string::npos);    // file survives
  CHECK(echo.find("\"variant\": \"simit-c\"") != std::string::npos);
  CHECK(fs::exists(fs::path(out) / "log.jsonl"));
  CHECK(fs::exists(fs::path(out) / "final.ckpt"));

  CmdResult conflict = run_cli("train --data " + d.str() + " --out " + out + " --resume " + out +
                               "/final.ckpt --epochs 4");
  CHECK(conflict.code == 2);
  CHECK(conflict.out.find("resume") != std::string::npos);
}

TEST_CASE("cli: train, translate and evaluate chain end to end") {
  TempDir d("cli_chain");
  CHECK(run_cli(tiny_gen(d.str(), 10)).code == 0);
  std::string run = d.str() + "/run";

  CmdResult tr = run_cli("train --data " + d.str() + " --out " + run + kTinyNet +
                         " --variant simit --epochs 1 --seed 5");
  CHECK(tr.code == 0);
  CHECK(tr.out.find("final checkpoint") != std::string::npos);

  std::string imgs = d.str() + "/translated";
  CmdResult tl = run_cli("translate --ckpt " + run + "/final.ckpt --data " + d.str() +
                         " --split test --mode label2image --out " + imgs + " --seed 1");
  CHECK(tl.code == 0);
  CmdResult tl2 = run_cli("translate --ckpt " + run + "/final.ckpt --data " + d.str() +
                          " --split test --mode image2label --out " + d.str() + "/labels");
  CHECK(tl2.code == 0);

  CmdResult ssim = run_cli("evaluate --metric ssim --ref " + d.str() + "/paired/images/test" +
                           " --test " + imgs);
  CHECK(ssim.code == 0);
  double v = parse_metric(ssim.out, "ssim");
  CHECK(v > -1.0);
  CHECK(v < 1.0);

  CmdResult seg = run_cli("evaluate --metric seg --ref " + d.str() + "/real_labels/test" +
                          " --test " + d.str() + "/labels --classes 3");
  CHECK(seg.code == 0);
  CHECK(parse_metric(seg.out, "pixel_acc") >= 0.0);

  // an f-less checkpoint cannot run image2label
  std::string run2 = d.str() + "/run_cs";
  CHECK(run_cli("train --data " + d.str() + " --out " + run2 + kTinyNet +
                " --variant simit-cs --epochs 1 --seed 5")
            .code == 0);
  CmdResult wrong = run_cli("translate --ckpt " + run2 + "/final.ckpt --data " + d.str() +
                            " --mode image2label --out " + d.str() + "/nope");
  CHECK(wrong.code == 2);
  CHECK(wrong.out.find("simit checkpoint") != std::string::npos);

  // resuming a finished run exits cleanly without stepping
  CmdResult done = run_cli("train --data " + d.str() + " --out " + run + " --resume " + run +
                           "/final.ckpt");
  CHECK(done.code == 0);
  CHECK(done.out.find("trained 0 steps") != std::string::npos);
}
