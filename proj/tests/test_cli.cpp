// Drives the command-line tool through std::system. BTMAP_CLI is the path of
// the built executable.

#include "btmap/io.hpp"

#include <catch2/catch.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sys/wait.h>

using namespace btmap;

namespace {

namespace fs = std::filesystem;

const fs::path& work() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "btmap_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string in_work(const std::string& name) { return (work() / name).string(); }

struct Run {
  int code = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string out = in_work("stdout.txt");
  const std::string cmd = "cd '" + work().string() + "' && '" BTMAP_CLI "' " + args + " > '" + out + "' 2> '" +
                          in_work("stderr.txt") + "'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out);
  r.out.assign(std::istreambuf_iterator<char>(in), {});
  return r;
}

void ok(const std::string& args) {
  const Run r = cli(args);
  INFO(args);
  REQUIRE(r.code == 0);
  // exactly one line, a JSON object with status ok
  REQUIRE(std::count(r.out.begin(), r.out.end(), '\n') == 1);
  REQUIRE(nlohmann::json::parse(r.out).at("status") == "ok");
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double score_of(const std::string& report) { return nlohmann::json::parse(slurp(in_work(report))).at("mean").get<double>(); }

}  // namespace

TEST_CASE("simulation is seeded") {
  ok("--seed 7 simulate --scenario LR900 --n 100 --out a.csv --locs-out locs.csv");
  ok("--seed 7 simulate --scenario LR900 --n 100 --out b.csv");
  CHECK(slurp(in_work("a.csv")) == slurp(in_work("b.csv")));
  const Matrix A = io::read_matrix(in_work("a.csv"));
  CHECK(A.rows() == 100);
  CHECK(A.cols() == 900);
}

TEST_CASE("fit, transform and invert") {
  ok("--seed 8 simulate --scenario NR900 --n 40 --out train.csv --locs-out locs.csv");
  std::ofstream(in_work("quick.json")) << R"({"fit": {"restarts": 1, "max_evals": 60}})";
  ok("--config quick.json fit --data train.csv --locs locs.csv --method nonlin --out m.btm");
  ok("transform --map m.btm --data train.csv --out z.bin");
  ok("invert --map m.btm --coefs z.bin --out back.bin");
  const Matrix Y = io::read_matrix(in_work("train.csv"));
  const Matrix B = io::read_matrix(in_work("back.bin"));
  REQUIRE(B.rows() == Y.rows());
  CHECK(((B - Y).cwiseAbs().array() / (1.0 + Y.cwiseAbs().array())).maxCoeff() <= 1e-8);

  ok("--seed 3 sample --map m.btm --count 4 --out s.csv");
  CHECK(io::read_matrix(in_work("s.csv")).rows() == 4);
  ok("--seed 3 condsim --map m.btm --ref train.csv --k 900 --count 2 --out c.csv");
  const Matrix C = io::read_matrix(in_work("c.csv"));
  CHECK((C.row(1) - Y.row(0)).cwiseAbs().maxCoeff() <= 1e-8);
  ok("diagnose --map m.btm --data back.bin --out diag.json --csv diag.csv");
  ok("order --locs locs.csv --m-max 5 --out ord.csv");
  ok("--seed 8 kl --scenario NR900 --map m.btm --test train.csv --out kl.json");
  ok("score --method map --map m.btm --test train.csv --out sc.json");
}

TEST_CASE("exit codes") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("simulate --scenario XX --out x.csv").code == 1);
  std::ofstream(in_work("bad.csv")) << "1,2\n3\n";
  ok("--seed 1 simulate --scenario LR900 --n 5 --out tiny.csv --locs-out tl.csv");
  CHECK(cli("fit --data bad.csv --locs tl.csv --out x.btm").code == 2);
  std::ofstream(in_work("bad.btm")) << "nonsense";
  CHECK(cli("transform --map bad.btm --data tiny.csv --out z.csv").code == 2);
  std::ofstream(in_work("pos_q.json")) << R"({"fit": {"optimize": false, "theta": [0,1,0,1,0,0.5]}})";
  CHECK(cli("--config pos_q.json fit --data tiny.csv --locs tl.csv --out x.btm").code == 3);
  std::ofstream(in_work("unknown.json")) << R"({"fit": {"bogus": 1}})";
  CHECK(cli("--config unknown.json fit --data tiny.csv --locs tl.csv --out x.btm").code == 1);
}

TEST_CASE("nonlinear map scores better than linear on NR900") {
  ok("--seed 21 simulate --scenario NR900 --n 100 --out tr.bin --locs-out l.csv");
  ok("--seed 22 simulate --scenario NR900 --n 30 --out te.bin");
  std::ofstream(in_work("budget.json")) << R"({"fit": {"restarts": 1, "max_evals": 150}})";
  ok("--config budget.json score --method linear --train tr.bin --locs l.csv --test te.bin --out lin.json");
  ok("--config budget.json score --method nonlin --train tr.bin --locs l.csv --test te.bin --out nl.json");
  CHECK(score_of("nl.json") < score_of("lin.json"));
}
