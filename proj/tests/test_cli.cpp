#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mmfx/image_io.hpp"
#include "mmfx/json_util.hpp"

using namespace mmfx;
namespace fs = std::filesystem;

namespace {

const char* kBin = MMFX_BIN_PATH;

int run(const std::string& args) {
  const std::string cmd = std::string(kBin) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Pipeline {
  fs::path root;
  fs::path data_dir;
  fs::path run_dir;
  std::string model_cfg;
  std::string train_cfg;

  Pipeline() {
    root = fs::temp_directory_path() / "mmfx_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);
    data_dir = root / "data";
    run_dir = root / "run";

    nlohmann::json synth = {{"n_samples", 60}, {"image_h", 16}, {"image_w", 16}};
    std::ofstream(root / "synth.json") << synth.dump(2);

    nlohmann::json model = {{"fusion_kind", "cross_attention_img_from_clin"},
                            {"d", 8},
                            {"d_k", 8},
                            {"classifier_hidden", 12},
                            {"backbone", {{"input_h", 16}, {"input_w", 16}, {"stem_channels", 4}, {"block_channels", {6, 8}}}}};
    model_cfg = (root / "model.json").string();
    std::ofstream(model_cfg) << model.dump(2);

    nlohmann::json train = {{"lr", 1e-3}, {"batch_size", 16}, {"max_epochs", 2}};
    train_cfg = (root / "train.json").string();
    std::ofstream(train_cfg) << train.dump(2);
  }

  std::string manifest() const { return (data_dir / "manifest.json").string(); }
  std::string checkpoint() const { return (run_dir / "checkpoint.mmfx").string(); }
};

}  // namespace

TEST_CASE("cli pipeline: synth -> train -> eval -> explain -> gradcheck") {
  Pipeline p;

  REQUIRE(run("synth --config " + (p.root / "synth.json").string() + " --seed 7 --out " + p.data_dir.string()) == 0);
  CHECK(fs::exists(p.data_dir / "manifest.json"));
  CHECK(fs::exists(p.data_dir / "clinical.csv"));
  CHECK(fs::exists(p.data_dir / "images" / "s00000.pgm"));
  // the emitted PGM parses under its published grammar
  Tensor img = read_pgm((p.data_dir / "images" / "s00000.pgm").string());
  CHECK(img.shape == std::vector<int>{1, 16, 16});

  REQUIRE(run("train --data " + p.manifest() + " --model-config " + p.model_cfg + " --train-config " + p.train_cfg +
              " --seed 5 --out " + p.run_dir.string()) == 0);
  CHECK(fs::exists(p.checkpoint()));
  CHECK(fs::exists(p.run_dir / "history.csv"));
  CHECK(fs::exists(p.run_dir / "manifest.json"));
  const std::string history = read_file(p.run_dir / "history.csv");
  CHECK(history.rfind("epoch,train_loss,val_loss,val_auc,lr\n", 0) == 0);

  SUBCASE("train is bit-deterministic for a fixed seed") {
    fs::path run2 = p.root / "run2";
    REQUIRE(run("train --data " + p.manifest() + " --model-config " + p.model_cfg + " --train-config " + p.train_cfg +
                " --seed 5 --out " + run2.string()) == 0);
    CHECK(read_file(p.checkpoint()) == read_file(run2 / "checkpoint.mmfx"));
    CHECK(read_file(p.run_dir / "history.csv") == read_file(run2 / "history.csv"));
  }

  SUBCASE("eval writes parsable metrics and roc files") {
    fs::path eval_dir = p.root / "eval";
    REQUIRE(run("eval --checkpoint " + p.checkpoint() + " --data " + p.manifest() + " --out " + eval_dir.string() +
                " --ci-resamples 50 --seed 3") == 0);
    nlohmann::json metrics = load_json_file((eval_dir / "metrics.json").string());
    CHECK(metrics.at("auc_roc").get<double>() >= 0.0);
    CHECK(metrics.at("auc_roc").get<double>() <= 1.0);
    CHECK(metrics.contains("auc_roc_ci95"));
    const std::string roc = read_file(eval_dir / "roc.csv");
    CHECK(roc.rfind("fpr,tpr,threshold\n", 0) == 0);

    fs::path eval2 = p.root / "eval2";
    REQUIRE(run("eval --checkpoint " + p.checkpoint() + " --data " + p.manifest() + " --out " + eval2.string() +
                " --ci-resamples 50 --seed 3") == 0);
    CHECK(read_file(eval_dir / "metrics.json") == read_file(eval2 / "metrics.json"));
  }

  SUBCASE("explain methods write their artifacts") {
    fs::path ex = p.root / "explain";
    REQUIRE(run("explain --checkpoint " + p.checkpoint() + " --data " + p.manifest() +
                " --sample s00001 --method gradcam --out " + (ex / "gradcam").string()) == 0);
    CHECK(fs::exists(ex / "gradcam" / "attribution.json"));
    CHECK(fs::exists(ex / "gradcam" / "gradcam_raw.csv"));
    // overlay PPM parses: P6 header, 16x16
    std::string ppm = read_file(ex / "gradcam" / "gradcam_overlay.ppm");
    CHECK(ppm.rfind("P6\n16 16\n255\n", 0) == 0);
    CHECK(ppm.size() == std::string("P6\n16 16\n255\n").size() + 16 * 16 * 3);

    REQUIRE(run("explain --checkpoint " + p.checkpoint() + " --data " + p.manifest() +
                " --sample s00001 --method shap --out " + (ex / "shap").string()) == 0);
    nlohmann::json shap = load_json_file((ex / "shap" / "attribution.json").string());
    CHECK(shap.at("method") == "shap");
    CHECK(shap.at("phi").size() == 5);
    CHECK(shap.at("efficiency_residual").get<double>() <= 1e-9);

    REQUIRE(run("explain --checkpoint " + p.checkpoint() + " --data " + p.manifest() +
                " --sample s00001 --method kernelshap --seed 2 --out " + (ex / "ks").string()) == 0);
    nlohmann::json ks = load_json_file((ex / "ks" / "attribution.json").string());
    CHECK(ks.at("method") == "kernelshap");

    // kernelshap with full enumeration must match exact shap on this sample
    double max_diff = 0.0;
    for (int i = 0; i < 5; ++i)
      max_diff = std::max(max_diff, std::abs(shap.at("phi")[i].get<double>() - ks.at("phi")[i].get<double>()));
    CHECK(max_diff <= 1e-6);

    REQUIRE(run("explain --checkpoint " + p.checkpoint() + " --data " + p.manifest() +
                " --sample s00002 --method lime --seed 4 --n-perturbations 200 --out " + (ex / "lime").string()) == 0);
    nlohmann::json lime = load_json_file((ex / "lime" / "attribution.json").string());
    CHECK(lime.at("method") == "lime");
    CHECK(lime.at("coefficients").size() == 5);

    REQUIRE(run("explain --checkpoint " + p.checkpoint() + " --data " + p.manifest() +
                " --sample s00002 --method lime --scheme image --grid 4 --seed 4 --n-perturbations 100 --out " +
                (ex / "lime_img").string()) == 0);
    CHECK(fs::exists(ex / "lime_img" / "lime_overlay.ppm"));
  }

  SUBCASE("exit codes: usage errors are 2") {
    CHECK(run("explain --checkpoint " + p.checkpoint() + " --data " + p.manifest() +
              " --sample nonexistent --method gradcam --out " + (p.root / "x1").string()) == 2);
    CHECK(run("explain --checkpoint " + p.checkpoint() + " --data " + p.manifest() +
              " --sample s00001 --method mystery --out " + (p.root / "x2").string()) == 2);
    // lime without a seed is a usage error: randomness must flow from --seed
    CHECK(run("explain --checkpoint " + p.checkpoint() + " --data " + p.manifest() +
              " --sample s00001 --method lime --out " + (p.root / "x3").string()) == 2);
    CHECK(run("train --data " + p.manifest() + " --out " + (p.root / "x4").string()) == 2);  // missing --seed
    CHECK(run("synth --seed 1") == 2);                                                       // missing --out
  }
}

TEST_CASE("cli gradcheck subcommand (single fast seed)") {
  CHECK(run("gradcheck --seed 3 --seeds 1") == 0);
}
