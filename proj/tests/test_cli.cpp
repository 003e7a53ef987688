#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "dtjrd/image.hpp"
#include "dtjrd/vcm.hpp"
#include "test_util.hpp"

using namespace dtjrd;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = 0;
  std::string out;
};

// Runs the CLI in `cwd`, capturing stdout; stderr goes to a side file.
Result cli(const std::string& args, const fs::path& cwd) {
  const auto out = cwd / "stdout.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" DTJRD_CLI_PATH "' " + args + " > '" + out.string() +
                          "' 2> '" + (cwd / "stderr.txt").string() + "'";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::string find_value(const std::string& text, const std::string& key) {
  for (const auto& l : lines(text))
    if (l.rfind(key + " ", 0) == 0) return l.substr(key.size() + 1);
  return {};
}

}  // namespace

TEST_CASE("labels subcommand") {
  testutil::TempDir dir("cli-labels");
  const auto r = cli("labels --mu 30 --sigma 3", dir.path());
  REQUIRE(r.status == 0);
  const auto ls = lines(r.out);
  REQUIRE(ls.size() == 65);
  CHECK(ls[0] == "x,probability");
  double total = 0;
  for (std::size_t i = 1; i < ls.size(); ++i) total += std::stod(ls[i].substr(ls[i].find(',') + 1));
  CHECK(std::abs(total - 1.0) < 1e-9);
  CHECK(fs::exists(dir / "dtjrd-labels.run.json"));
}

TEST_CASE("usage errors") {
  testutil::TempDir dir("cli-usage");
  CHECK(cli("labels --mu 30 --no-such-flag", dir.path()).status != 0);
  CHECK(cli("labels", dir.path()).status != 0);
  CHECK(cli("frobnicate", dir.path()).status != 0);
  CHECK(cli("labels --mu 30 --kind wavy", dir.path()).status == 2);
}

TEST_CASE("bdrate of a curve against itself") {
  testutil::TempDir dir("cli-bd");
  std::ofstream(dir / "a.csv") << "rate_bpp,metric\n0.1,30\n0.2,34\n0.4,37\n0.8,39\n";
  const auto r = cli("bdrate a.csv a.csv", dir.path());
  REQUIRE(r.status == 0);
  CHECK(r.out.find("BD-rate: 0.00%") != std::string::npos);
}

TEST_CASE("proxy-encode through the external adapter matches the built-in codec") {
  testutil::TempDir dir("cli-ext");
  Image img(90, 70, 3);
  for (int y = 0; y < 70; ++y)
    for (int x = 0; x < 90; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>((x * 3 + y * 5 + c * 60 + x * y) % 256);
  save_png(img, dir / "in.png");
  const std::vector<Box> boxes{{10, 10, 50, 40}};
  const auto map = assign_qps(classify_ctus(90, 70, boxes), std::vector<int>{28}, -2, 36).map;
  save_qpmap(map, dir / "map.txt");

  ProxyCodec proxy;
  const auto expect = proxy.encode(img, map);

  const auto direct = cli("proxy-encode --image in.png --qpmap map.txt --recon-out direct.png", dir.path());
  REQUIRE(direct.status == 0);
  CHECK(find_value(direct.out, "bits") == std::to_string(expect.bits));
  CHECK(load_image(dir / "direct.png") == expect.reconstruction);

  // the CLI itself plays the external encoder
  const std::string tmpl = std::string("'") + DTJRD_CLI_PATH +
                           "' proxy-encode --image {input} --qpmap {qpmap} --recon-out {output} "
                           "--run-manifest {output}.run.json | sed -n 's/^bits //p' > {bits}";
  ExternalCodec ext(tmpl, dir.path());
  const auto via = ext.encode(img, map);
  CHECK(via.bits == expect.bits);
  CHECK(via.reconstruction == expect.reconstruction);
}

TEST_CASE("failed runs leave no partial outputs") {
  testutil::TempDir dir("cli-fail");
  REQUIRE(cli("synth-data --n 4 --seed 3 --out-dir data", dir.path()).status == 0);
  const auto r = cli(
      "curve --manifest data/manifest.jsonl --use-gt --codec external --encoder-cmd false "
      "--base-qps 30,32,34,36 --out-dir sweep",
      dir.path());
  CHECK(r.status != 0);
  CHECK_FALSE(fs::exists(dir / "sweep" / "curve.csv"));
  CHECK_FALSE(fs::exists(dir / "sweep" / "jrd_used.csv"));
  CHECK_FALSE(fs::exists(dir / "sweep" / "run.json"));
}

TEST_CASE("end-to-end pipeline") {
  testutil::TempDir dir("cli-e2e");
  const auto& d = dir.path();
  REQUIRE(cli("synth-data --n 24 --seed 5 --out-dir data", d).status == 0);
  REQUIRE(cli("make-splits --manifest data/manifest.jsonl --seed 1", d).status == 0);
  CHECK(fs::exists(d / "data" / "splits.csv"));
  const auto tr = cli(
      "train --manifest data/manifest.jsonl --splits data/splits.csv --epochs 2 --batch-size 4 "
      "--checkpoint-out model.ckpt",
      d);
  REQUIRE(tr.status == 0);
  CHECK(fs::exists(d / "model.ckpt"));
  CHECK(fs::exists(d / "model.ckpt.run.json"));
  CHECK(fs::exists(d / "model.ckpt.log.csv"));
  REQUIRE(cli("predict --checkpoint model.ckpt --manifest data/manifest.jsonl --out pred.csv", d).status == 0);
  const auto m = cli("metrics --pred pred.csv --gt data/manifest.jsonl", d);
  REQUIRE(m.status == 0);
  const auto ea = find_value(m.out, "E_A");
  REQUIRE_FALSE(ea.empty());
  CHECK(std::isfinite(std::stod(ea)));

  const auto c = cli(
      "curve --manifest data/manifest.jsonl --checkpoint model.ckpt --base-qps 27,31 --delta-qps -4,0 "
      "--out-dir sweep",
      d);
  REQUIRE(c.status == 0);
  CHECK(lines([&] {
          std::ifstream in(d / "sweep" / "curve.csv");
          std::stringstream ss;
          ss << in.rdbuf();
          return ss.str();
        }())
            .size() == 5);
  CHECK(fs::exists(d / "sweep" / "run.json"));
  CHECK(fs::exists(d / "sweep" / "jrd_used.csv"));
}
