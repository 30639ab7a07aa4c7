#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <unistd.h>

#include "cli/commands.hpp"
#include "cli/reports.hpp"
#include "dacal/log.hpp"
#include "dacal/manifest.hpp"
#include "dacal/metrics.hpp"
#include "dacal/serialize.hpp"
#include "dacal/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace dacal;

namespace {

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "dacal");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class CliTest : public ::testing::Test {
 protected:
  static fs::path dir;
  static fs::path manifest;

  static void SetUpTestSuite() {
    set_log_level(LogLevel::error);
    dir = fs::temp_directory_path() / ("dacal_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    ASSERT_EQ(run({"synth", "--out", (dir / "data").string(), "--seed", "3", "--train", "600",
                   "--val", "300", "--test", "300", "--ood", "300", "--severities", "0,0.5,1",
                   "--offset", "8", "--temperature", "2", "--k", "10"}),
              0);
    manifest = dir / "data" / "manifest.json";
  }
  static void TearDownTestSuite() { fs::remove_all(dir); }
};

fs::path CliTest::dir;
fs::path CliTest::manifest;

}  // namespace

TEST(Reports, FormatNumber) {
  EXPECT_EQ(cli::format_number(0.1), "0.1");
  EXPECT_EQ(cli::format_number(2.0), "2");
  EXPECT_EQ(std::stod(cli::format_number(1.0 / 3.0)), 1.0 / 3.0);
  EXPECT_EQ(cli::format_number(std::nan("")), "nan");
  cli::CsvWriter csv({"a", "b"});
  csv.add({"x,y", "q\""});
  EXPECT_EQ(csv.str(), "a,b\n\"x,y\",\"q\"\"\"\n");
  EXPECT_EQ(cli::quantile({4, 1, 3, 2}, 0.5), 2.5);
}

TEST_F(CliTest, SynthWritesManifest) {
  const auto m = ExperimentManifest::load(manifest);
  EXPECT_EQ(m.num_classes, 10);
  EXPECT_EQ(m.eval_splits, (std::vector<std::string>{"shift_0", "shift_1", "shift_2"}));
  EXPECT_EQ(m.ood_split, "ood");
  EXPECT_EQ(m.k_per_layer, (std::vector<int>{10, 10, 10}));
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run({"fit", "--manifest", manifest.string(), "--method", "dac+ts", "--out",
                 (dir / "x.json").string()}),
            2);
  EXPECT_EQ(run({"fit", "--manifest", (dir / "none.json").string(), "--out", (dir / "x.json").string()}), 2);
  EXPECT_EQ(run({"fit"}), 2);
  EXPECT_EQ(run({"bogus"}), 2);
  EXPECT_EQ(run({"data-efficiency", "--manifest", manifest.string(), "--fractions", "0.001", "--out",
                 (dir / "eff_bad").string()}),
            2);

  // A corrupt tensor is a data error.
  const auto broken = dir / "broken";
  fs::copy(dir / "data", broken, fs::copy_options::recursive);
  {
    std::ofstream out(broken / "val" / "logits.dact", std::ios::binary | std::ios::trunc);
    out << "XXXX";
  }
  EXPECT_EQ(run({"fit", "--manifest", (broken / "manifest.json").string(), "--method", "ts", "--out",
                 (dir / "x.json").string()}),
            3);
}

TEST_F(CliTest, TsFitEvaluateMatchesLibrary) {
  const auto model_path = dir / "ts.json";
  ASSERT_EQ(run({"fit", "--manifest", manifest.string(), "--method", "ts", "--out", model_path.string()}), 0);
  EXPECT_TRUE(fs::exists(cli::metadata_path_for_file(model_path)));
  const auto out = dir / "eval_ts";
  ASSERT_EQ(run({"evaluate", "--manifest", manifest.string(), "--model", model_path.string(), "--out",
                 out.string()}),
            0);
  const auto csv = slurp(out / "metrics.csv");
  EXPECT_EQ(line_count(csv), 1 + 3 * cli::all_metric_names().size());

  const auto m = ExperimentManifest::load(manifest);
  const auto val = m.load_split("val");
  const auto t = fit_ts(val.logits, *val.labels);
  const auto test = m.load_split("shift_1");
  const double ece = ece_equal_width(apply_ts(t, test.logits), *test.labels).ece;
  EXPECT_NE(csv.find("shift_1,ts,ece," + cli::format_number(ece) + "\n"), std::string::npos) << csv;

  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  EXPECT_TRUE(summary.at("macro").contains("ece"));
  EXPECT_TRUE(fs::exists(out / "reliability" / "shift_0_equal_width.csv"));
  EXPECT_TRUE(fs::exists(out / "reliability" / "shift_0_equal_mass.csv"));
}

TEST_F(CliTest, DacPipelineAndReports) {
  const auto idx = dir / "index";
  ASSERT_EQ(run({"build-index", "--manifest", manifest.string(), "--out", idx.string()}), 0);
  EXPECT_TRUE(fs::exists(idx / "layer1.dact"));
  const auto model_path = dir / "ets_dac.json";
  ASSERT_EQ(run({"fit", "--manifest", manifest.string(), "--method", "ets+dac", "--index", idx.string(),
                 "--out", model_path.string()}),
            0);
  const auto model = load_model(model_path);
  ASSERT_TRUE(model.dac.has_value());

  // Indices from disk and in memory give identical calibrated outputs.
  ASSERT_EQ(run({"calibrate", "--manifest", manifest.string(), "--model", model_path.string(), "--split",
                 "shift_2", "--index", idx.string(), "--out", (dir / "p1.dact").string()}),
            0);
  ASSERT_EQ(run({"calibrate", "--manifest", manifest.string(), "--model", model_path.string(), "--split",
                 "shift_2", "--out", (dir / "p2.dact").string(), "--threads", "4"}),
            0);
  EXPECT_EQ(slurp(dir / "p1.dact"), slurp(dir / "p2.dact"));
  EXPECT_EQ(load_tensor(dir / "p1.dact").rows(), 300u);

  const auto layers_csv = dir / "layers.csv";
  ASSERT_EQ(run({"report-layers", "--model", model_path.string(), "--out", layers_csv.string()}), 0);
  const auto text = slurp(layers_csv);
  EXPECT_EQ(line_count(text), 1 + 3 + 1);
  EXPECT_NE(text.find("\nbias,"), std::string::npos);

  ASSERT_EQ(run({"ood", "--manifest", manifest.string(), "--model", model_path.string(), "--out",
                 (dir / "ood").string()}),
            0);
  const auto ood = nlohmann::json::parse(slurp(dir / "ood" / "ood.json"));
  for (const char* k : {"fpr_at_95_tpr", "detection_error", "auroc", "aupr_in", "aupr_out"}) {
    EXPECT_TRUE(ood.at("metrics").contains(k)) << k;
  }
  EXPECT_TRUE(ood.at("confidence").at("in").contains("median"));

  // A model without the density scaler has no layer weights to report.
  const auto ts_path = dir / "ts_only.json";
  ASSERT_EQ(run({"fit", "--manifest", manifest.string(), "--method", "ts", "--out", ts_path.string()}), 0);
  EXPECT_EQ(run({"report-layers", "--model", ts_path.string(), "--out", (dir / "no.csv").string()}), 2);
}

TEST_F(CliTest, KSweepSortedAndDeterministic) {
  const auto a = dir / "sweep_a";
  const auto b = dir / "sweep_b";
  ASSERT_EQ(run({"k-sweep", "--manifest", manifest.string(), "--ks", "50,1,10", "--out", a.string()}), 0);
  ASSERT_EQ(run({"k-sweep", "--manifest", manifest.string(), "--ks", "10,50,1,1", "--out", b.string(),
                 "--threads", "8"}),
            0);
  const auto text = slurp(a / "k_sweep.csv");
  EXPECT_EQ(text, slurp(b / "k_sweep.csv"));
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  std::vector<int> ks;
  while (std::getline(lines, line)) ks.push_back(std::stoi(line.substr(0, line.find(','))));
  EXPECT_TRUE(std::is_sorted(ks.begin(), ks.end()));
  EXPECT_EQ(ks.front(), 1);
  EXPECT_EQ(ks.back(), 50);
}

TEST_F(CliTest, KSweepSingleKMatchesFitAndEvaluate) {
  const auto sweep = dir / "sweep_single";
  ASSERT_EQ(run({"k-sweep", "--manifest", manifest.string(), "--ks", "10", "--out", sweep.string()}), 0);
  const auto model_path = dir / "ts_dac.json";
  ASSERT_EQ(run({"fit", "--manifest", manifest.string(), "--method", "ts+dac", "--out", model_path.string()}), 0);
  const auto eval = dir / "eval_ts_dac";
  ASSERT_EQ(run({"evaluate", "--manifest", manifest.string(), "--model", model_path.string(), "--metrics",
                 "ece", "--out", eval.string()}),
            0);
  const auto summary = nlohmann::json::parse(slurp(eval / "summary.json"));
  const auto text = slurp(sweep / "k_sweep.csv");
  for (const char* split : {"shift_0", "shift_1", "shift_2"}) {
    const std::string ece = cli::format_number(summary.at("splits").at(split).at("ece").get<double>());
    EXPECT_NE(text.find(std::string("10,") + split + ",ts+dac," + ece + ","), std::string::npos) << split;
  }
}

TEST_F(CliTest, DataEfficiencyFullFractionEqualsPlainFit) {
  const auto out = dir / "eff";
  ASSERT_EQ(run({"data-efficiency", "--manifest", manifest.string(), "--fractions", "1", "--repeats", "1",
                 "--method", "ts", "--out", out.string()}),
            0);
  const auto model_path = dir / "ts_plain.json";
  ASSERT_EQ(run({"fit", "--manifest", manifest.string(), "--method", "ts", "--out", model_path.string()}), 0);
  ASSERT_EQ(run({"evaluate", "--manifest", manifest.string(), "--model", model_path.string(), "--metrics",
                 "ece", "--out", (dir / "eval_plain").string()}),
            0);
  const auto summary = nlohmann::json::parse(slurp(dir / "eval_plain" / "summary.json"));
  const std::string macro = cli::format_number(summary.at("macro").at("ece").get<double>());
  EXPECT_NE(slurp(out / "data_efficiency.csv").find("1,ts,1," + macro + ",0,"), std::string::npos);

  const auto again = dir / "eff_again";
  ASSERT_EQ(run({"data-efficiency", "--manifest", manifest.string(), "--fractions", "0.5,1", "--repeats", "3",
                 "--seed", "9", "--out", again.string()}),
            0);
  ASSERT_EQ(run({"data-efficiency", "--manifest", manifest.string(), "--fractions", "0.5,1", "--repeats", "3",
                 "--seed", "9", "--out", (dir / "eff_again2").string()}),
            0);
  EXPECT_EQ(slurp(again / "data_efficiency_runs.csv"), slurp(dir / "eff_again2" / "data_efficiency_runs.csv"));
}

TEST_F(CliTest, BuildIndexIsReproducible) {
  ASSERT_EQ(run({"build-index", "--manifest", manifest.string(), "--out", (dir / "i1").string(), "--subsample",
                 "0.5", "--seed", "4"}),
            0);
  ASSERT_EQ(run({"build-index", "--manifest", manifest.string(), "--out", (dir / "i2").string(), "--subsample",
                 "0.5", "--seed", "4"}),
            0);
  for (const char* f : {"layer1.json", "layer2.json", "layer3.dact"}) {
    EXPECT_EQ(slurp(dir / "i1" / f), slurp(dir / "i2" / f)) << f;
  }
}
