#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "promptrec/cli.hpp"
#include "promptrec/config.hpp"
#include "promptrec/errors.hpp"

using namespace promptrec;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "promptrec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("promptrec_test_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config files reject unknown keys and malformed lines") {
  Config c;
  std::istringstream ok("# comment\nseed = 5\n  lr=3e-4  # trailing\n\n");
  c.parse(ok, "ok.cfg");
  CHECK(c.get_u64("seed") == 5);
  CHECK(c.get_double("lr") == 3e-4);

  std::istringstream unknown("seed = 1\nlearning_rate = 0.1\n");
  try {
    Config().parse(unknown, "bad.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.cfg:2") != std::string::npos);
    CHECK(std::string(e.what()).find("learning_rate") != std::string::npos);
    CHECK(e.exit_code() == 2);
  }
  std::istringstream no_eq("seed 1\n");
  CHECK_THROWS_AS(Config().parse(no_eq, "x"), ConfigError);
}

TEST_CASE("typed config reads") {
  Config c;
  c.set("epochs", "ten");
  CHECK_THROWS_AS(c.get_size("epochs"), ConfigError);
  c.set("lr", "1e-3x");
  CHECK_THROWS_AS(c.get_double("lr"), ConfigError);
  c.set("cl_enabled", "maybe");
  CHECK_THROWS_AS(c.get_bool("cl_enabled"), ConfigError);
  c.set("gen_vocab_sizes", "2, 6,2");
  CHECK(c.get_sizes("gen_vocab_sizes") == std::vector<std::size_t>{2, 6, 2});
  CHECK_THROWS_AS(c.set("nope", "1"), ConfigError);
  Config d;
  d.set("seed", "9");
  std::istringstream back(d.dump());
  Config e;
  e.parse(back, "dump");
  CHECK(e.dump() == d.dump());
}

TEST_CASE("command line exit codes") {
  TempDir tmp;
  const auto out = tmp.path.string();
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({}) == 2);
  CHECK(cli({"tune", "--set", "bogus_key=1"}) == 2);
  CHECK(cli({"eval", "--out-dir", out}) == 2);  // no interactions given
  {
    std::ofstream bad(tmp.path / "bad.cfg");
    bad << "seed = 1\nwhat = 2\n";
  }
  CHECK(cli({"gen-data", "--config", (tmp.path / "bad.cfg").string(), "--out-dir", out}) == 2);
  {
    std::ofstream log(tmp.path / "broken.tsv");
    log << "u1\ti1\t1\nu1\ti2\n";
  }
  CHECK(cli({"pretrain", "--interactions", (tmp.path / "broken.tsv").string(), "--out-dir", out}) == 4);
  {
    std::ofstream ck(tmp.path / "junk.ckpt");
    ck << "not a checkpoint";
  }
  CHECK(cli({"gen-data", "--out-dir", out, "--set", "gen_warm_users=20", "--set", "gen_cold_users=10",
             "--set", "gen_num_items=120"}) == 0);
  const auto inter = (tmp.path / "interactions.tsv").string();
  CHECK(cli({"tune", "--interactions", inter, "--ckpt", (tmp.path / "junk.ckpt").string(), "--out-dir", out}) == 3);
  CHECK(cli({"sweep", "--interactions", inter, "--out-dir", out}) == 1);
}

TEST_CASE("pipeline commands write reports and reproduce from their manifests") {
  TempDir tmp;
  const auto dir = tmp.path / "run";
  const auto again = tmp.path / "again";
  {
    std::ofstream c(tmp.path / "small.cfg");
    c << "gen_warm_users = 60\ngen_cold_users = 30\ngen_num_items = 120\nmodel_dim = 8\n"
         "pretrain_epochs = 1\nepochs = 1\nmax_seq_len = 12\n";
  }
  const auto cfg = (tmp.path / "small.cfg").string();
  REQUIRE(cli({"gen-data", "--config", cfg, "--out-dir", dir.string()}) == 0);
  const auto data = std::vector<std::string>{"--interactions", (dir / "interactions.tsv").string(), "--profiles",
                                             (dir / "profiles.tsv").string()};
  auto with = [&](std::vector<std::string> a) {
    a.insert(a.end(), data.begin(), data.end());
    return a;
  };
  REQUIRE(cli(with({"pretrain", "--config", cfg, "--out-dir", dir.string()})) == 0);
  REQUIRE(cli(with({"tune", "--config", cfg, "--ckpt", (dir / "pretrain.ckpt").string(), "--out-dir", dir.string()})) == 0);
  REQUIRE(cli(with({"eval", "--config", cfg, "--ckpt", (dir / "tune.ckpt").string(), "--out-dir", dir.string()})) == 0);
  CHECK(slurp(dir / "eval_joint.txt").rfind("auc=", 0) == 0);
  CHECK(fs::exists(dir / "eval_joint.json"));
  CHECK(slurp(dir / "tune.manifest").find("sha256=") != std::string::npos);

  for (const std::string verb : {"pretrain", "tune", "eval"}) {
    REQUIRE(cli({verb, "--config", (dir / (verb + ".manifest")).string(), "--out-dir", again.string()}) == 0);
  }
  CHECK(slurp(again / "pretrain.ckpt") == slurp(dir / "pretrain.ckpt"));
  CHECK(slurp(again / "tune.ckpt") == slurp(dir / "tune.ckpt"));
  CHECK(slurp(again / "eval_joint.txt") == slurp(dir / "eval_joint.txt"));

  REQUIRE(cli(with({"sweep", "--config", cfg, "--ckpt", (dir / "pretrain.ckpt").string(), "--out-dir",
                    dir.string(), "--grid", "lambda=0,0.1", "--grid", "mode=light,full"})) == 0);
  std::istringstream csv(slurp(dir / "sweep.csv"));
  std::string header;
  std::getline(csv, header);
  CHECK(header.rfind("cell,seed,lambda,mode,auc", 0) == 0);
  std::size_t rows = 0;
  for (std::string l; std::getline(csv, l);) ++rows;
  CHECK(rows == 4);
}
