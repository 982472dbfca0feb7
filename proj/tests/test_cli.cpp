#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "hsmon/eval.hpp"
#include "hsmon/syntax.hpp"

using namespace hsmon;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("hsmon_cli_" + std::to_string(getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string in_dir(const std::string& name) { return (workdir() / name).string(); }

int cli(const std::string& args) {
  std::string cmd = std::string(HSMON_CLI) + " " + args + " > " + in_dir("stdout.txt") + " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("synth writes the formula and a rule trace") {
  REQUIRE(cli("synth --model two_branch --out " + in_dir("m.mon")) == 0);
  std::ifstream in(in_dir("m.mon"));
  std::string first, line;
  std::getline(in, first);
  Formula f = parse_formula(first);
  int mismatches = 0;
  for (int a = -1; a <= 5; ++a)
    for (int b = -1; b <= 5; ++b)
      for (int ap = -1; ap <= 5; ++ap)
        for (int bp = -1; bp <= 5; ++bp) {
          TransitionPair pair{{{"a", a}, {"b", b}}, {{"a", ap}, {"b", bp}}};
          bool expected = (ap == a + 1 && bp == b) || (ap == a && bp <= 3);
          if (eval_formula(f, pair, 1e-9) != expected) ++mismatches;
        }
  CHECK(mismatches == 0);
  int rules = 0;
  while (std::getline(in, line)) {
    CHECK(line.rfind("{", 0) == 0);
    CHECK(line.find("\"rule\"") != std::string::npos);
    ++rules;
  }
  CHECK(rules > 0);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(cli("sim run --scenario drift --runs 0") == 2);
  CHECK(cli("sim run --scenario drift --bogus") == 2);
  CHECK(cli("sim run --scenario no_such_model") == 2);
  CHECK(cli("sim run --scenario drift --noise loud") == 2);
  CHECK(cli("synth --out " + in_dir("x.mon")) == 2);
  CHECK(cli("") == 2);
  CHECK(cli("monitor eval --model drift --trace " + in_dir("missing.csv")) == 2);
  CHECK(cli("monitor eval --model watertank_original --trace " + in_dir("x.mon") +
            " --delta 0.1") == 2);
  CHECK(cli("--help") == 0);
}

TEST_CASE("sim run is deterministic") {
  std::string args = "sim run --scenario watertank_sensor --runs 4 --steps 12 --seed 7 --out ";
  REQUIRE(cli(args + in_dir("a.csv")) == 0);
  REQUIRE(cli(args + in_dir("b.csv")) == 0);
  std::string a = slurp(in_dir("a.csv"));
  CHECK(!a.empty());
  CHECK(a == slurp(in_dir("b.csv")));
  CHECK(slurp(in_dir("stdout.txt")).find("precision") != std::string::npos);
  CHECK(slurp(in_dir("b.json")).find("\"true_nonalarms\"") != std::string::npos);

  REQUIRE(cli("sim run --scenario watertank_sensor --runs 4 --steps 12 --out " + in_dir("c.csv")) == 0);
  std::string base = slurp(in_dir("c.csv"));
  setenv("HSMON_SEED", "5", 1);
  REQUIRE(cli("sim run --scenario watertank_sensor --runs 4 --steps 12 --out " + in_dir("d.csv")) == 0);
  REQUIRE(cli("sim run --scenario watertank_sensor --runs 4 --steps 12 --out " + in_dir("e.csv")) == 0);
  unsetenv("HSMON_SEED");
  CHECK(slurp(in_dir("d.csv")) != base);
  CHECK(slurp(in_dir("d.csv")) == slurp(in_dir("e.csv")));
}

TEST_CASE("expect-clean exit codes") {
  CHECK(cli("sim run --scenario watertank_original --runs 3 --steps 10 --fault-probability 0 "
            "--expect-clean --out " + in_dir("clean.csv")) == 0);
  CHECK(cli("monitor eval --model watertank_original --trace " + in_dir("clean.csv") +
            " --expect-clean --out " + in_dir("v.csv")) == 0);
  std::string verdicts = slurp(in_dir("v.csv"));
  CHECK(verdicts.rfind("run,row,verdict\n", 0) == 0);
  CHECK(verdicts.find("violated") == std::string::npos);

  CHECK(cli("sim run --scenario watertank_original --runs 3 --steps 10 --fault-probability 1 "
            "--expect-clean --out " + in_dir("faulty.csv")) == 1);
  CHECK(cli("monitor eval --model watertank_original --trace " + in_dir("faulty.csv") +
            " --expect-clean") == 1);
  CHECK(cli("monitor eval --model watertank_original --trace " + in_dir("faulty.csv")) == 0);
}

TEST_CASE("monitor eval with an overridden radius") {
  REQUIRE(cli("sim run --scenario watertank_sensor --runs 2 --steps 10 --fault-probability 0 "
               "--out " + in_dir("s.csv")) == 0);
  CHECK(cli("monitor eval --model watertank_sensor --kind pairwise --delta 0.1 --expect-clean "
            "--trace " + in_dir("s.csv")) == 0);
  CHECK(cli("monitor eval --model watertank_sensor --kind pairwise --delta 0 --expect-clean "
            "--trace " + in_dir("s.csv")) == 1);
}

TEST_CASE("report tabulates summaries") {
  REQUIRE(cli("sim run --scenario watertank_original --runs 2 --steps 5 --out " + in_dir("w.csv") +
              " --summary " + in_dir("w.json")) == 0);
  REQUIRE(cli("report " + in_dir("w.json")) == 0);
  std::string table = slurp(in_dir("stdout.txt"));
  CHECK(table.find("| watertank_original | exact | 2 x 5 |") != std::string::npos);
  CHECK(cli("report " + in_dir("w.csv")) == 2);
}
