#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

#include "nails/data.hpp"

namespace fs = std::filesystem;

namespace {

struct CliFixture {
  fs::path dir;
  CliFixture() {
    dir = fs::temp_directory_path() /
          ("nails_cli_" + std::to_string(::getpid()) + "_" +
           std::to_string(counter()++));
    fs::create_directories(dir);
  }
  ~CliFixture() { fs::remove_all(dir); }
  static int& counter() {
    static int c = 0;
    return c;
  }

  std::string path(const std::string& name) const {
    return (dir / name).string();
  }

  int run(const std::string& args, const std::string& log = "log.txt") const {
    const std::string cmd = std::string(NAILS_CLI_BIN) + " " + args + " > " +
                            path(log) + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string slurp(const std::string& name) const {
    std::ifstream in(path(name));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream out(path(name));
    out << text;
  }
};

const char* kTinyConfig =
    "[model]\n"
    "n_x=2\n"
    "fx_hidden=3\n"
    "fy_hidden=3\n"
    "output=sigmoid\n"
    "feedthrough=0\n"
    "[loss]\n"
    "kind=xent\n"
    "[reg]\n"
    "rho_x=0.1\n"
    "rho_theta=0.01\n"
    "[solver]\n"
    "kind=nails\n"
    "epochs=5\n"
    "[data]\n"
    "synthetic=binary\n"
    "n_total=120\n"
    "seed=3\n"
    "[x0]\n"
    "n0=20\n"
    "iterations=5\n";

bool same_bytes(const std::string& a, const std::string& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::ostringstream sa, sb;
  sa << fa.rdbuf();
  sb << fb.rdbuf();
  return sa.str() == sb.str() && !sa.str().empty();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("train twice: byte-identical artifacts") {
  CliFixture fx;
  fx.write("cfg.ini", kTinyConfig);
  REQUIRE(fx.run("train --config " + fx.path("cfg.ini") + " --seed 1 --out " +
                 fx.path("a")) == 0);
  REQUIRE(fx.run("train --config " + fx.path("cfg.ini") + " --seed 1 --out " +
                 fx.path("b")) == 0);
  CHECK(same_bytes(fx.path("a/history.csv"), fx.path("b/history.csv")));
  CHECK(same_bytes(fx.path("a/model.txt"), fx.path("b/model.txt")));
  CHECK(same_bytes(fx.path("a/metrics.csv"), fx.path("b/metrics.csv")));
  // A different seed changes the run.
  REQUIRE(fx.run("train --config " + fx.path("cfg.ini") + " --seed 2 --out " +
                 fx.path("c")) == 0);
  CHECK_FALSE(same_bytes(fx.path("a/model.txt"), fx.path("c/model.txt")));
}

TEST_CASE("missing config exits 2 and names the path") {
  CliFixture fx;
  CHECK(fx.run("train --config " + fx.path("nope.ini")) == 2);
  CHECK(fx.slurp("log.txt").find("nope.ini") != std::string::npos);
}

TEST_CASE("config typos exit 2") {
  CliFixture fx;
  fx.write("bad.ini", "[solver]\nkindd=nails\n[data]\nsynthetic=binary\n");
  CHECK(fx.run("train --config " + fx.path("bad.ini")) == 2);
}

TEST_CASE("sweep emits one row per value") {
  CliFixture fx;
  fx.write("cfg.ini", std::string(kTinyConfig) +
                          "[nonsmooth]\nkind=l1\nrho=1\nn_admm=3\n");
  REQUIRE(fx.run("train --config " + fx.path("cfg.ini") +
                 " --sweep tau=1e-3:1:log:3 --out " + fx.path("sw")) == 0);
  const std::string summary = fx.slurp("sw/sweep.csv");
  // header + 3 rows
  CHECK(std::count(summary.begin(), summary.end(), '\n') == 4);
  CHECK(fs::exists(fx.path("sw/sweep_000/model.txt")));
  CHECK(fs::exists(fx.path("sw/sweep_002/model.txt")));
}

TEST_CASE("generate: sidecar reproduces the dataset") {
  CliFixture fx;
  REQUIRE(fx.run("generate --sigma 0.05 --n 300 --seed 17 --out " +
                 fx.path("d1")) == 0);
  REQUIRE(fx.run("generate --config " + fx.path("d1/generate.ini") +
                 " --out " + fx.path("d2")) == 0);
  CHECK(same_bytes(fx.path("d1/train.csv"), fx.path("d2/train.csv")));
  CHECK(same_bytes(fx.path("d1/test.csv"), fx.path("d2/test.csv")));
}

TEST_CASE("generate: negative sigma exits 2, bad directory exits 3") {
  CliFixture fx;
  CHECK(fx.run("generate --sigma -0.1 --n 100 --seed 1 --out " +
               fx.path("x")) == 2);
  CHECK(fx.run("generate --sigma 0.1 --n 100 --seed 1 --out "
               "/proc/definitely/not/writable") == 3);
}

TEST_CASE("eval: stored x0 reproduces the train-split metrics") {
  CliFixture fx;
  fx.write("cfg.ini", kTinyConfig);
  REQUIRE(fx.run("train --config " + fx.path("cfg.ini") + " --seed 4 --out " +
                 fx.path("run")) == 0);
  // The synthetic train split is the first half of the generated trace;
  // regenerate it as CSV for the eval command.
  REQUIRE(fx.run("generate --sigma 0 --n 120 --seed 3 --out " +
                 fx.path("data")) == 0);
  REQUIRE(fx.run("eval --model " + fx.path("run/model.txt") + " --data " +
                 fx.path("data/train.csv") + " --header --x0 stored --out " +
                 fx.path("eval.csv")) == 0);
  // bfr from eval matches the train log to high precision.
  auto grab = [](const std::string& text, const std::string& key) {
    const size_t at = text.find(key);
    REQUIRE(at != std::string::npos);
    const size_t start = at + key.size();
    return std::stod(text.substr(start));
  };
  const double bfr_eval = grab(fx.slurp("eval.csv"), "bfr,eval,");
  const double bfr_train = grab(fx.slurp("run/metrics.csv"), "bfr,train,");
  CHECK(std::abs(bfr_eval - bfr_train) < 1e-9);
}

TEST_CASE("eval: dimension mismatch exits 3") {
  CliFixture fx;
  fx.write("cfg.ini", kTinyConfig);
  REQUIRE(fx.run("train --config " + fx.path("cfg.ini") + " --seed 5 --out " +
                 fx.path("run")) == 0);
  fx.write("wide.csv", "1.0,2.0,3.0\n4.0,5.0,6.0\n");
  CHECK(fx.run("eval --model " + fx.path("run/model.txt") + " --data " +
               fx.path("wide.csv")) == 3);
}

TEST_CASE("eval: encoder model without warm-up rows exits 3") {
  CliFixture fx;
  fx.write("cfg.ini",
           "[model]\n"
           "n_x=2\nfx_hidden=3\nfy_hidden=3\noutput=sigmoid\nfeedthrough=0\n"
           "encoder_hidden=3\nn_a=2\nn_b=2\n"
           "[solver]\nkind=nails\nepochs=2\n"
           "[reg]\nrho_x=0.1\nrho_theta=0.01\n"
           "[data]\nsynthetic=binary\nn_total=100\nseed=3\n"
           "[loss]\nkind=xent\n"
           "[x0]\nn0=10\niterations=3\n");
  REQUIRE(fx.run("train --config " + fx.path("cfg.ini") + " --seed 6 --out " +
                 fx.path("run")) == 0);
  fx.write("short.csv", "0.5,1\n0.25,0\n");  // shorter than the warm-up
  CHECK(fx.run("eval --model " + fx.path("run/model.txt") + " --data " +
               fx.path("short.csv")) == 3);
}

TEST_CASE("gradcheck: report format, exit codes, negative control") {
  CliFixture fx;
  REQUIRE(fx.run("gradcheck --seed 2") == 0);
  const std::string report = fx.slurp("log.txt");
  CHECK(report.find("check,max_rel_err,tol,status") != std::string::npos);
  CHECK(report.find("objective_gradient") != std::string::npos);
  CHECK(report.find("FAIL") == std::string::npos);
  CHECK(fx.run("gradcheck --seed 2 --corrupt") == 1);
  CHECK(fx.slurp("log.txt").find("FAIL") != std::string::npos);
}

TEST_CASE("solver override flag") {
  CliFixture fx;
  fx.write("cfg.ini", kTinyConfig);
  REQUIRE(fx.run("train --config " + fx.path("cfg.ini") +
                 " --seed 1 --solver amsgrad --out " + fx.path("ams")) == 0);
  CHECK(fx.slurp("ams/history.csv").find("epoch") != std::string::npos);
}

}  // TEST_SUITE
