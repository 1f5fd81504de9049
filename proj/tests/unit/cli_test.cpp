#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "stnet/ensemble.hpp"
#include "stnet_cli/cli.hpp"
#include "test_util.hpp"

namespace stnet {
namespace {

using test::TempDir;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"count-params", "--arch", "fully3d", "--bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"count-params"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"count-params", "--arch", "nope"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"count-params", "--arch", "fully3d", "--channels", "1,2"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"gradcheck", "--target", "layer", "--name", "nope", "--seed", "1"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST(Cli, CountParamsJson) {
  const auto r = run({"count-params", "--arch", "fully3d", "--json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["total_weights"], 779328);
  EXPECT_EQ(j["decrease_factor"], 1.0);
  EXPECT_FALSE(j.contains("flops"));
  const auto f = nlohmann::json::parse(run({"count-params", "--arch", "two-block3", "--json", "--flops", "16,64,64"}).out);
  EXPECT_EQ(f["total_weights"], 336960);
  EXPECT_GT(f["flops"].get<std::uint64_t>(), 0u);
  const auto c = nlohmann::json::parse(run({"count-params", "--arch", "fully3d", "--json", "--channels", "3,1,1,1,1"}).out);
  EXPECT_EQ(c["total_weights"], 27 * 3 + 27 * 3);
  EXPECT_NE(run({"count-params", "--arch", "two-block2"}).out.find("435264"), std::string::npos);
}

TEST(Cli, Gradcheck) {
  const auto r = run({"gradcheck", "--target", "block", "--name", "block2plus", "--seed", "1"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_EQ(j["tolerance"], 1e-6);
  const auto m = nlohmann::json::parse(run({"gradcheck", "--target", "model", "--name", "feat-lstm", "--seed", "2"}).out);
  EXPECT_EQ(m["tolerance"], 1e-5);
  const auto fail = run({"gradcheck", "--target", "layer", "--name", "batchnorm", "--seed", "1", "--eps", "0.5"});
  EXPECT_EQ(fail.code, cli::kExitRuntime);
}

TEST(Cli, FuseFiles) {
  TempDir dir;
  write_predictions(dir / "a.csv", {"a", {"x", "y"}, {0.6, 0.2}});
  write_predictions(dir / "b.csv", {"b", {"y", "x"}, {0.4, 0.8}});
  std::ofstream(dir / "m.jsonl") << R"({"duration_s":1,"id":"x","label":1,"path":"x","split":"test"})" << '\n'
                                 << R"({"duration_s":1,"id":"y","label":0,"path":"y","split":"test"})" << '\n';
  const std::string preds = (dir / "a.csv").string() + "," + (dir / "b.csv").string();
  auto r = run({"fuse", "--preds", preds, "--weights", "equal", "--out", (dir / "f.csv").string(), "--labels",
                (dir / "m.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto f = read_predictions(dir / "f.csv");
  EXPECT_EQ(f.ids, (std::vector<std::string>{"x", "y"}));
  EXPECT_DOUBLE_EQ(f.probs[0], 0.7);
  EXPECT_DOUBLE_EQ(f.probs[1], 0.3);
  EXPECT_NE(r.out.find("accuracy=1.000000"), std::string::npos) << r.out;

  r = run({"fuse", "--preds", preds, "--val-acc", "0.8,0.6", "--out", (dir / "g.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_DOUBLE_EQ(read_predictions(dir / "g.csv").probs[0], 4.0 / 7.0 * 0.6 + 3.0 / 7.0 * 0.8);

  EXPECT_EQ(run({"fuse", "--preds", preds, "--out", (dir / "h.csv").string()}).code, cli::kExitUsage);
  EXPECT_EQ(run({"fuse", "--preds", preds, "--weights", "1", "--out", (dir / "h.csv").string()}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"fuse", "--preds", (dir / "a.csv").string(), "--weights", "equal", "--out", "x"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"fuse", "--preds", preds + "," + (dir / "absent.csv").string(), "--weights", "equal", "--out",
                 (dir / "h.csv").string()})
                .code,
            cli::kExitRuntime);
}

TEST(Cli, GenerateTrainEvaluate) {
  TempDir dir;
  const std::string data = (dir / "audio").string();
  auto r = run({"gen-synth", "--kind", "audio", "--out", data, "--train", "12", "--val", "6", "--test", "6", "--seed",
                "3", "--feat-dim", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  r = run({"train", "--arch", "audio-dnn-256", "--data", data, "--epochs", "2", "--seed", "1", "--lr", "1e-3",
           "--checkpoint", (dir / "best.stc").string(), "--history", (dir / "h.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch 0 "), std::string::npos);
  EXPECT_NE(r.out.find("epoch 2 "), std::string::npos);
  std::ifstream h(dir / "h.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(h, line)) ++lines;
  EXPECT_EQ(lines, 4u);

  r = run({"eval", "--arch", "audio-dnn-256", "--checkpoint", (dir / "best.stc").string(), "--data", data, "--split",
           "test", "--preds", (dir / "p.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accuracy="), std::string::npos);
  EXPECT_EQ(read_predictions(dir / "p.csv").ids.size(), 6u);

  r = run({"eval", "--arch", "audio-dnn-512", "--checkpoint", (dir / "best.stc").string(), "--data", data, "--preds",
           (dir / "q.csv").string()});
  EXPECT_EQ(r.code, cli::kExitRuntime);
  EXPECT_EQ(run({"train", "--arch", "audio-dnn-256", "--data", data, "--epochs", "0", "--seed", "1", "--checkpoint",
                 "x"})
                .code,
            cli::kExitUsage);
}

}  // namespace
}  // namespace stnet
