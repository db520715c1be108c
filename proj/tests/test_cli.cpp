#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pptr/cli/app.hpp"

using namespace pptr;
namespace fs = std::filesystem;

namespace {

const std::string kSmall = std::string(PPTR_CONFIG_DIR) + "/pipeline_small.cfg";

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pptr");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("pptr_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

void run_pipeline(const fs::path& d, const std::vector<std::string>& train_extra = {}) {
  const std::string data = (d / "data").string(), fit = (d / "fit").string(), ext = (d / "ext.ckpt").string(),
                    pool = (d / "pool.ckpt").string(), model = (d / "model.ckpt").string();
  ASSERT_EQ(run_cli({"gen-data", "--spec", kSmall, "--out", data}).code, 0);
  ASSERT_EQ(run_cli({"fit-primitives", "--in", data, "--m", "4", "--min-inliers", "10", "--out", fit}).code, 0);
  ASSERT_EQ(run_cli({"pretrain-extractor", "--data", fit, "--cfg", kSmall, "--out", ext}).code, 0);
  ASSERT_EQ(run_cli({"build-mempool", "--data", fit, "--ckpt", ext, "--out", pool}).code, 0);
  std::vector<std::string> tr = {"train", "--task", "seg", "--data", fit, "--pool", pool,
                                 "--init", ext, "--cfg", kSmall, "--out", model};
  tr.insert(tr.end(), train_extra.begin(), train_extra.end());
  const Outcome t = run_cli(tr);
  ASSERT_EQ(t.code, 0) << t.err;
  const Outcome e = run_cli({"eval", "--ckpt", model, "--data", fit, "--out", (d / "eval.csv").string()});
  ASSERT_EQ(e.code, 0) << e.err;
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

void expect_one_error_line(const Outcome& o, const std::string& code) {
  EXPECT_EQ(lines(o.err), 1u) << o.err;
  EXPECT_EQ(o.err.rfind("error: " + code + ": ", 0), 0u) << o.err;
}

}  // namespace

TEST(CliPipeline, EndToEndWithManifests) {
  const fs::path d = fresh_dir("e2e");
  run_pipeline(d);
  for (const char* m : {"data/run.manifest", "fit/run.manifest", "ext.ckpt.manifest", "pool.ckpt.manifest",
                        "model.ckpt.manifest", "eval.csv.manifest"}) {
    ASSERT_TRUE(fs::exists(d / m)) << m;
    const KeyValue kv = KeyValue::load((d / m).string());
    EXPECT_EQ(kv.get("format_version"), "1") << m;
    EXPECT_TRUE(kv.has("subcommand") && kv.has("seed") && kv.has("created")) << m;
  }
  EXPECT_EQ(KeyValue::load((d / "model.ckpt.manifest").string()).get("artifact.checkpoint"), (d / "model.ckpt").string());
  EXPECT_EQ(data::read_index(d / "fit").info.get("has_primitives"), "1");

  const std::string metrics = slurp(d / "model.ckpt.metrics.csv");
  EXPECT_EQ(metrics.rfind("epoch,loss,acc,miou,iou_0,iou_1,iou_2,iou_3\n", 0), 0u);
  EXPECT_EQ(lines(metrics), 3u);  // header + 2 epochs
  EXPECT_EQ(lines(slurp(d / "ext.ckpt.metrics.csv")), 2u);

  const std::string eval = slurp(d / "eval.csv");
  EXPECT_EQ(eval.rfind("split,task,samples,acc,miou,iou_0,iou_1,iou_2,iou_3,baseline_acc,baseline_miou\neval,seg,2,", 0),
            0u)
      << eval;

  // The trained checkpoint carries its pools, so it loads on its own.
  const model::Checkpoint ck = model::read_checkpoint(d / "model.ckpt");
  EXPECT_EQ(ck.config.get("role"), "model");
  EXPECT_TRUE(ck.has("pool.seq_0005.mask"));
  EXPECT_NO_THROW(model::weights_from(ck));
  fs::remove_all(d);
}

TEST(CliPipeline, ByteIdenticalReruns) {
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  run_pipeline(a);
  run_pipeline(b);
  for (const char* f : {"data/seq_0000/frame_0000.xyz", "fit/seq_0003/frame_0002.xyz", "fit/seq_0003/planes_0002.txt", "ext.ckpt",
                        "ext.ckpt.metrics.csv", "pool.ckpt", "model.ckpt", "model.ckpt.metrics.csv", "eval.csv"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(CliPipeline, SeedFlagChangesInitialisation) {
  const fs::path a = fresh_dir("seed_a"), b = fresh_dir("seed_b");
  run_pipeline(a);
  run_pipeline(b, {"--seed", "99"});
  EXPECT_NE(slurp(a / "model.ckpt"), slurp(b / "model.ckpt"));
  EXPECT_EQ(slurp(a / "pool.ckpt"), slurp(b / "pool.ckpt"));
  EXPECT_EQ(KeyValue::load((b / "model.ckpt.manifest").string()).get("seed"), "99");
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(CliErrors, UsageErrorsNameTheFlag) {
  Outcome o = run_cli({});
  EXPECT_EQ(o.code, cli::kExitUsage);
  expect_one_error_line(o, "UsageError");

  o = run_cli({"train", "--data", "x", "--cfg", kSmall, "--out", "y"});
  EXPECT_EQ(o.code, cli::kExitUsage);
  expect_one_error_line(o, "UsageError");
  EXPECT_NE(o.err.find("--task"), std::string::npos);

  o = run_cli({"fit-primitives", "--in", "x", "--m", "4", "--method", "hough", "--out", "y"});
  EXPECT_EQ(o.code, cli::kExitUsage);
  EXPECT_NE(o.err.find("--method"), std::string::npos);

  o = run_cli({"gen-data", "--spec", kSmall, "--out", "y", "--bogus"});
  EXPECT_EQ(o.code, cli::kExitUsage);

  o = run_cli({"eval", "--help"});
  EXPECT_EQ(o.code, 0);
  EXPECT_NE(o.out.find("--ckpt"), std::string::npos);
}

TEST(CliErrors, RuntimeErrorsAreOneLine) {
  const fs::path d = fresh_dir("err");
  Outcome o = run_cli({"gen-data", "--spec", (d / "missing.cfg").string(), "--out", (d / "x").string()});
  EXPECT_EQ(o.code, cli::kExitError);
  expect_one_error_line(o, "IoError");

  std::ofstream(d / "bad.cfg") << "layout=spiral\n";
  o = run_cli({"gen-data", "--spec", (d / "bad.cfg").string(), "--out", (d / "x").string()});
  EXPECT_EQ(o.code, cli::kExitError);
  expect_one_error_line(o, "InvalidSpec");

  const std::string data = (d / "data").string(), fit = (d / "fit").string();
  ASSERT_EQ(run_cli({"gen-data", "--spec", kSmall, "--out", data}).code, 0);
  o = run_cli({"train", "--task", "seg", "--data", data, "--cfg", kSmall, "--out", (d / "m").string()});
  EXPECT_EQ(o.code, cli::kExitError);
  expect_one_error_line(o, "InvalidConfig");
  EXPECT_NE(o.err.find("fit-primitives"), std::string::npos);

  ASSERT_EQ(run_cli({"fit-primitives", "--in", data, "--m", "4", "--out", fit}).code, 0);
  o = run_cli({"train", "--task", "seg", "--data", fit, "--cfg", kSmall, "--out", (d / "m").string()});
  EXPECT_EQ(o.code, cli::kExitError);
  expect_one_error_line(o, "InvalidConfig");

  std::ofstream(d / "wrong_k.cfg") << slurp(kSmall) << "num_classes=5\n";
  o = run_cli({"train", "--task", "seg", "--data", fit, "--cfg", (d / "wrong_k.cfg").string(), "--out",
           (d / "m").string()});
  EXPECT_EQ(o.code, cli::kExitError);
  expect_one_error_line(o, "ConfigMismatch");

  const std::string ext = (d / "ext.ckpt").string();
  ASSERT_EQ(run_cli({"pretrain-extractor", "--data", fit, "--cfg", kSmall, "--out", ext}).code, 0);
  o = run_cli({"eval", "--ckpt", ext, "--data", fit});
  EXPECT_EQ(o.code, cli::kExitError);
  expect_one_error_line(o, "ConfigMismatch");
  fs::remove_all(d);
}

TEST(CliCostReport, SingleRow) {
  const Outcome o = run_cli({"cost-report", "--n", "1024", "--m", "4", "--lmem", "0", "--lrange", "24"});
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(lines(o.out), 2u);
  EXPECT_NE(o.out.find("\n24,1024,4,0,603979776,6291456,9216,6300672,"), std::string::npos) << o.out;

  const fs::path d = fresh_dir("cost");
  const Outcome f = run_cli({"cost-report", "--n", "1024", "--m", "12", "--lmem", "6", "--lrange", "2..64", "--out",
                         (d / "cost.csv").string()});
  ASSERT_EQ(f.code, 0);
  EXPECT_EQ(lines(slurp(d / "cost.csv")), 64u);
  EXPECT_TRUE(fs::exists(d / "cost.csv.manifest"));
  EXPECT_EQ(run_cli({"cost-report", "--n", "3", "--m", "4", "--lmem", "0", "--lrange", "1"}).code, cli::kExitError);
  fs::remove_all(d);
}
