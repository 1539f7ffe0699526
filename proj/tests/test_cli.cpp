#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <set>

#include "psdip/run_io.hpp"
#include "test_util.hpp"

using namespace psdip;
namespace fs = std::filesystem;
using psdip::testing::scratch_dir;

namespace {

struct Outcome {
  int status = -1;
  std::string out;  // stdout followed by stderr
};

Outcome run(const std::string& args) {
  const std::string cmd = std::string(PSDIP_CLI_PATH) + " " + args + " 2>&1";
  Outcome r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf;
  while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) r.out += buf.data();
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small scene, its reduced-resolution pair and a fast network config.
fs::path prepare(const fs::path& dir) {
  std::ofstream(dir / "fast.json") << R"({"hidden_channels": 4, "res_blocks": 1, "kernel_size": 17})";
  EXPECT_EQ(run("synth --size 32x32x3 --seed 2 --out " + q(dir / "gt" / "hrms.npy")).status, 0);
  EXPECT_EQ(run("degrade --in " + q(dir / "gt" / "hrms.npy") + " --pan " + q(dir / "gt" / "pan.npy") + " --out " +
                q(dir / "rr" / "lrms.npy") + " --config " + q(dir / "fast.json"))
                .status,
            0);
  return dir / "fast.json";
}

}  // namespace

TEST(Cli, VersionAndUsage) {
  const auto v = run("--version");
  EXPECT_EQ(v.status, 0);
  EXPECT_NE(v.out.find(kVersion), std::string::npos);
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("fuse --bogus 1").status, 2);
}

TEST(Cli, SynthDegradeFuseMetricsChain) {
  const auto dir = scratch_dir();
  const auto cfg = prepare(dir);
  ASSERT_TRUE(fs::exists(dir / "gt" / "pan.npy"));
  ASSERT_TRUE(fs::exists(dir / "rr" / "pan_lr.npy"));
  const auto lrms = to_tensor3<double>(read_npy((dir / "rr" / "lrms.npy").string()));
  EXPECT_EQ(lrms.height(), 8U);
  EXPECT_EQ(lrms.bands(), 3U);

  const auto fused = run("fuse --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " + q(dir / "gt" / "pan.npy") +
                         " --out " + q(dir / "run" / "fused.npy") + " --config " + q(cfg) +
                         " --init-steps 3 --steps 3 --ref " + q(dir / "rr" / "lrms.npy"));
  // the reference has the wrong resolution for the fused output
  EXPECT_EQ(fused.status, 2) << fused.out;

  fs::remove_all(dir / "run");
  const auto ok = run("fuse --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " + q(dir / "gt" / "pan.npy") +
                      " --out " + q(dir / "run" / "fused.npy") + " --config " + q(cfg) + " --init-steps 3 --steps 3");
  ASSERT_EQ(ok.status, 0) << ok.out;
  const auto manifest = read_json_file((dir / "run" / "manifest.json").string());
  EXPECT_EQ(manifest["command"], "fuse");
  EXPECT_TRUE(manifest["metrics"].contains("qnr"));
  EXPECT_EQ(manifest["config"]["steps"], 3);
  EXPECT_EQ(read_runlog((dir / "run" / "runlog.jsonl").string()).records.size(), 6U);

  const auto m = run("metrics --in " + q(dir / "gt" / "hrms.npy") + " --ref " + q(dir / "gt" / "hrms.npy"));
  ASSERT_EQ(m.status, 0) << m.out;
  const auto j = Json::parse(m.out);
  EXPECT_EQ(j["psnr"], 99.0);
  EXPECT_EQ(j["sam"], 0.0);
}

TEST(Cli, RunDirectoryHoldsOnlyOutputsLogAndManifest) {
  const auto dir = scratch_dir();
  const auto cfg = prepare(dir);
  const auto r = run("fuse-tv --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " + q(dir / "gt" / "pan.npy") +
                     " --out " + q(dir / "tv" / "x.npy") + " --config " + q(cfg) + " --steps 4 --ref " +
                     q(dir / "gt" / "hrms.npy"));
  ASSERT_EQ(r.status, 0) << r.out;
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir / "tv")) names.insert(e.path().filename().string());
  EXPECT_EQ(names, (std::set<std::string>{"x.npy", "x_g.npy", "runlog.jsonl", "manifest.json"}));
  const auto manifest = read_json_file((dir / "tv" / "manifest.json").string());
  EXPECT_TRUE(manifest["metrics"].contains("psnr"));
  EXPECT_EQ(manifest["inputs"]["ref"]["sha256"], sha256_file((dir / "gt" / "hrms.npy").string()));
}

TEST(Cli, RerunFromManifestIsBitIdentical) {
  const auto dir = scratch_dir();
  const auto cfg = prepare(dir);
  const std::string inputs = " --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " + q(dir / "gt" / "pan.npy");
  ASSERT_EQ(run("fuse" + inputs + " --out " + q(dir / "a" / "x.npy") + " --config " + q(cfg) +
                " --init-steps 4 --steps 4 --seed 9")
                .status,
            0);
  ASSERT_EQ(run("fuse" + inputs + " --out " + q(dir / "b" / "x.npy") + " --config " + q(dir / "a" / "manifest.json"))
                .status,
            0);
  EXPECT_EQ(slurp(dir / "a" / "x.npy"), slurp(dir / "b" / "x.npy"));
  EXPECT_EQ(slurp(dir / "a" / "x_g.npy"), slurp(dir / "b" / "x_g.npy"));
  EXPECT_EQ(slurp(dir / "a" / "runlog.jsonl"), slurp(dir / "b" / "runlog.jsonl"));
}

TEST(Cli, SaveParamsWritesACheckpoint) {
  const auto dir = scratch_dir();
  const auto cfg = prepare(dir);
  ASSERT_EQ(run("fuse --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " + q(dir / "gt" / "pan.npy") + " --out " +
                q(dir / "run" / "x.npy") + " --config " + q(cfg) + " --steps 1 --init-steps 1 --save-params " +
                q(dir / "ckpt"))
                .status,
            0);
  const auto params = load_params<double>((dir / "ckpt").string());
  EXPECT_EQ(params.arch.hidden_channels, 4U);
}

TEST(Cli, ErrorsMapToExitCodes) {
  const auto dir = scratch_dir();
  const auto cfg = prepare(dir);
  const auto missing = run("fuse --pan " + q(dir / "gt" / "pan.npy") + " --out " + q(dir / "x.npy"));
  EXPECT_EQ(missing.status, 2);
  EXPECT_NE(missing.out.find("code=cli.missing"), std::string::npos);

  std::ofstream(dir / "bad.npy") << "garbage";
  const auto bad = run("fuse --lrms " + q(dir / "bad.npy") + " --pan " + q(dir / "gt" / "pan.npy") + " --out " +
                       q(dir / "x.npy"));
  EXPECT_EQ(bad.status, 3);
  EXPECT_NE(bad.out.find("kind=io"), std::string::npos);
  EXPECT_NE(bad.out.find("code=npy.magic"), std::string::npos);

  const auto mismatch = run("fuse --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " + q(dir / "rr" / "pan_lr.npy") +
                            " --out " + q(dir / "x.npy") + " --config " + q(cfg));
  EXPECT_EQ(mismatch.status, 2);
  EXPECT_NE(mismatch.out.find("code=shape.ratio"), std::string::npos);

  std::ofstream(dir / "unknown.json") << R"({"lamda": 0.1})";
  const auto unknown = run("degrade --in " + q(dir / "gt" / "hrms.npy") + " --out " + q(dir / "y.npy") +
                           " --config " + q(dir / "unknown.json"));
  EXPECT_EQ(unknown.status, 2);
  EXPECT_NE(unknown.out.find("config.unknown_key"), std::string::npos);

  const auto diverge = run("fuse-tv --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " + q(dir / "gt" / "pan.npy") +
                           " --out " + q(dir / "d" / "x.npy") + " --config " + q(cfg) + " --alpha 1e6 --steps 50");
  EXPECT_EQ(diverge.status, 4) << diverge.out;
  EXPECT_NE(diverge.out.find("loss.non_finite"), std::string::npos);
}

TEST(Cli, ExtendPanAndQnr) {
  const auto dir = scratch_dir();
  prepare(dir);
  const std::string lr = " --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " + q(dir / "gt" / "pan.npy");
  ASSERT_EQ(run("extend-pan" + lr + " --out " + q(dir / "ext.npy")).status, 0);
  EXPECT_EQ(to_tensor3<double>(read_npy((dir / "ext.npy").string())).bands(), 3U);
  const auto r = run("qnr --in " + q(dir / "gt" / "hrms.npy") + " --lrms " + q(dir / "rr" / "lrms.npy") + " --pan " +
                     q(dir / "gt" / "pan.npy"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto j = Json::parse(r.out);
  EXPECT_GE(j["qnr"].get<double>(), 0.0);
  EXPECT_LE(j["qnr"].get<double>(), 1.0);
}

TEST(Cli, MetricsTableOverSeveralImages) {
  const auto dir = scratch_dir();
  prepare(dir);
  const auto gt = q(dir / "gt" / "hrms.npy");
  const auto r = run("metrics --in " + gt + " --in " + gt + " --ref " + gt + " --ref " + gt + " --csv " +
                     q(dir / "table.csv"));
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_TRUE(Json::parse(r.out).is_array());
  EXPECT_NE(slurp(dir / "table.csv").find("mean,99"), std::string::npos);
}
