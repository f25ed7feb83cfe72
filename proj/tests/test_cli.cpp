// Copyright 2026 The jpcc Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "jpcc/codec.hpp"
#include "jpcc/ply.hpp"

using namespace jpcc;
namespace fs = std::filesystem;

#ifndef JPCC_CLI
#error "JPCC_CLI must name the jpcc executable"
#endif

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const fs::path& dir, const std::string& args) {
  const fs::path out = dir / "stdout.txt";
  const std::string cmd =
      "cd '" + dir.string() + "' && '" JPCC_CLI "' " + args + " > '" + out.string() + "' 2>/dev/null";
  const int st = std::system(cmd.c_str());
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path workdir() {
  const fs::path d = fs::temp_directory_path() / ("jpcc_cli_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  PointCloud pc;
  for (int x = 0; x < 40; ++x)
    for (int y = 0; y < 40; ++y) pc.coords.push_back({x, y, int(20 + 4 * std::sin(x * 0.25))});
  std::vector<Rgb> c;
  for (const auto& p : pc.coords) c.push_back({uint8_t(p.x * 6), uint8_t(p.y * 6), uint8_t(p.z * 6)});
  pc.colors = std::move(c);
  pc.bit_depth = 6;
  save_ply(pc, (d / "in.ply").string(), false);
  return d;
}

}  // namespace

TEST_CASE("cli encode/decode/eval") {
  const fs::path d = workdir();
  REQUIRE(run(d, "init-weights --weights w --geo-models 1 --sr-sf 2").code == 0);
  CHECK(fs::exists(d / "w" / "coding_0.pccw"));
  CHECK(fs::exists(d / "w" / "sr_sf2.pccw"));

  const Run e = run(d, "encode in.ply a.bin --weights w --block-size 64 --report json");
  REQUIRE(e.code == 0);
  CHECK(e.out.find("\"geometry_bpp\"") != std::string::npos);
  CHECK(e.out.find("\"total_bpp\"") != std::string::npos);
  REQUIRE(run(d, "encode in.ply b.bin --weights w --block-size 64").code == 0);
  CHECK(slurp(d / "a.bin") == slurp(d / "b.bin"));

  REQUIRE(run(d, "encode in.ply g.bin --weights w --block-size 64 --no-color").code == 0);
  const std::string g = slurp(d / "g.bin");
  const auto gb = std::vector<uint8_t>(g.begin(), g.end());
  CHECK_FALSE(Container::parse(gb).geometry.color_present);

  REQUIRE(run(d, "decode a.bin out.ply --weights w").code == 0);
  const PointCloud dec = load_ply((d / "out.ply").string());
  CHECK(dec.has_colors());
  CHECK(dec.size() > 0);

  const Run self = run(d, "eval in.ply in.ply --characterize");
  REQUIRE(self.code == 0);
  CHECK(self.out.find("d1_psnr inf") != std::string::npos);
  CHECK(self.out.find("yuv_psnr inf") != std::string::npos);
  CHECK(self.out.find("density_class") != std::string::npos);
  const Run ev = run(d, "eval out.ply in.ply --report csv");
  REQUIRE(ev.code == 0);
  CHECK(ev.out.rfind("points_decoded,", 0) == 0);

  REQUIRE(run(d, "encode in.ply s.bin --weights w --block-size 64 --sf 2 --sr --topk-metric d2").code == 0);
  CHECK(run(d, "decode s.bin s.ply --weights w --ascii").code == 0);
  fs::remove_all(d);
}

TEST_CASE("cli exit codes") {
  const fs::path d = workdir();
  REQUIRE(run(d, "init-weights --weights w --geo-models 1 --sr-sf \"\"").code == 0);
  CHECK(run(d, "").code == 2);
  CHECK(run(d, "encode in.ply x.bin --weights w --qs -1").code == 2);
  CHECK(run(d, "encode in.ply x.bin --weights w --geo-model 3").code == 2);
  CHECK(run(d, "encode in.ply x.bin --weights w --sf 2 --sr").code == 2);
  CHECK(run(d, "encode missing.ply x.bin --weights w").code == 3);
  std::ofstream(d / "junk.bin") << "JPCCjunk";
  CHECK(run(d, "decode junk.bin x.ply --weights w").code == 4);
  std::ofstream(d / "bad.cfg") << "lambdas = 0.1\nunknown_key = 3\n";
  CHECK(run(d, "train bad.cfg --weights t").code == 2);
  fs::remove_all(d);
}

TEST_CASE("cli train and sweep") {
  const fs::path d = workdir();
  std::ofstream(d / "t.cfg") << "lambdas = 0.05, 0.01\nlr = 3e-3\nmax_epochs = 1\nbatch = 4\n"
                                "blocks = 4\nblock_size = 16\n";
  REQUIRE(run(d, "train t.cfg --weights tw").code == 0);
  CHECK(fs::exists(d / "tw" / "coding_0.pccw"));
  CHECK(fs::exists(d / "tw" / "coding_1.pccw"));
  const std::string hist = slurp(d / "tw" / "history.csv");
  CHECK(hist.rfind("lambda,epoch,lr,loss,distortion,bits\n", 0) == 0);

  const Run s = run(d, "sweep in.ply --weights tw --block-size 64 --sf-list 1 --sr-list 0 "
                       "--geo-list 0,1 --targets 1000");
  REQUIRE(s.code == 0);
  CHECK(s.out.find("target_bpp,config") != std::string::npos);
  CHECK(s.out.find("\n1000,") != std::string::npos);
  fs::remove_all(d);
}
