#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "support/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& dir() {
  static const fs::path d = [] {
    auto p = fs::temp_directory_path() / "memefusion_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

int cli(const std::string& args) {
  const std::string cmd = q(MEMEFUSION_CLI) + " " + args + " >> " + q(dir() / "cli.log") + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST_CASE("command-line workflow and exit codes") {
  const auto manifest = memefusion::testing::write_mixed_modality_corpus(dir() / "data", 24, 5, 32);
  write(dir() / "cfg.json", "{\"learning_rate\": 0.001, \"max_epochs\": 3}");
  const std::string g = "--toy-encoders --task A --config " + q(dir() / "cfg.json") + " ";
  const std::string m = "--manifest " + q(manifest) + " ";
  const std::string cache = "--cache " + q(dir() / "cache.bin") + " ";
  const std::string folds = "--folds " + q(dir() / "folds.json") + " ";

  SUBCASE("usage errors exit 1") {
    CHECK(cli("") == 1);
    CHECK(cli("--bogus split") == 1);
    CHECK(cli("--task C split " + m + "--out x") == 1);
    CHECK(cli("split " + m) == 1);
    write(dir() / "badcfg.json", "{\"no_such_key\": 1}");
    CHECK(cli("--config " + q(dir() / "badcfg.json") + " split " + m + "--out " + q(dir() / "f.json")) == 1);
    CHECK(cli("--help") == 0);
  }

  SUBCASE("data errors exit 2") {
    CHECK(cli(g + "split --manifest " + q(dir() / "missing.jsonl") + " --out " + q(dir() / "f.json")) == 2);
    write(dir() / "bad.jsonl", "{\"id\":\"x\",\"image_path\":\"x.png\",\"text\":\"\",\"label_a\":5}\n");
    CHECK(cli(g + "split --manifest " + q(dir() / "bad.jsonl") + " --out " + q(dir() / "f.json")) == 2);
    write(dir() / "noimg.jsonl", "{\"id\":\"x\",\"image_path\":\"nope.png\",\"text\":\"\",\"label_a\":1}\n");
    CHECK(cli(g + "preprocess --manifest " + q(dir() / "noimg.jsonl")) == 2);
    CHECK(cli(g + "ablate " + m + "--cache " + q(dir() / "nocache.bin") + " " + folds + "--out " + q(dir() / "x")) == 2);
  }

  SUBCASE("full pipeline") {
    REQUIRE(cli(g + "split " + m + "--folds 2 --out " + q(dir() / "folds.json") + " --csv " + q(dir() / "folds.csv")) == 0);
    CHECK(slurp(dir() / "folds.csv").rfind("id,fold\n", 0) == 0);
    CHECK(cli(g + "preprocess " + m) == 0);

    write(dir() / "boxes.csv", "# id,x,y,w,h,confidence\nmix0000,2,2,12,6,0.9\nmix0001,0,0,32,32,0.2\n");
    REQUIRE(cli(g + "preprocess " + m + "--remove-text --boxes " + q(dir() / "boxes.csv") +
                " --out-dir " + q(dir() / "removed")) == 0);
    CHECK(fs::exists(dir() / "removed" / "manifest.jsonl"));
    CHECK(cli(g + "preprocess " + m + "--remove-text --out-dir " + q(dir() / "r2")) == 1);

    REQUIRE(cli(g + "encode " + m + cache) == 0);
    REQUIRE(cli(g + "encode --manifest " + q(dir() / "removed" / "manifest.jsonl") + " " + cache +
                "--variant text_removed") == 0);

    REQUIRE(cli(g + "train " + m + cache + folds + "--model M7 --fold 0 --out " + q(dir() / "m7")) == 0);
    CHECK(fs::exists(dir() / "m7" / "fold_0" / "model.ckpt"));
    CHECK(slurp(dir() / "m7" / "fold_0" / "train_log.csv").rfind("epoch,loss,val_macro_f1,lr\n", 0) == 0);
    CHECK_FALSE(fs::exists(dir() / "m7" / "fold_1"));
    REQUIRE(cli(g + "train " + m + cache + folds + "--model M6 --fold 1 --out " + q(dir() / "m6")) == 0);
    CHECK(fs::exists(dir() / "m6" / "fold_1" / "ensemble" / "ensemble.json"));
    CHECK(cli(g + "train " + m + cache + folds + "--model M9 --out " + q(dir() / "m9")) == 1);

    REQUIRE(cli(g + "predict " + m + cache + "--checkpoint " + q(dir() / "m7" / "fold_0" / "model.ckpt") +
                " --out " + q(dir() / "pred.csv")) == 0);
    const auto preds = slurp(dir() / "pred.csv");
    CHECK(preds.rfind("id,prediction\nmix0000,", 0) == 0);
    CHECK(std::count(preds.begin(), preds.end(), '\n') == 25);
    CHECK(cli(g + "predict " + m + cache + "--checkpoint " + q(dir() / "m6" / "fold_1" / "ensemble") +
              " --out " + q(dir() / "pred6.csv")) == 0);

    REQUIRE(cli(g + "ablate " + m + cache + folds + "--models M1,M3,M8 --out " + q(dir() / "ab")) == 0);
    const auto csv = slurp(dir() / "ab" / "ablation.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    REQUIRE(cli("report --input " + q(dir() / "ab" / "ablation.json") + " --format csv --out " +
                q(dir() / "again.csv")) == 0);
    CHECK(slurp(dir() / "again.csv") == csv);
    CHECK(cli("report --input " + q(dir() / "ab" / "ablation.json") + " --format figure --out " +
              q(dir() / "fig.svg")) == 0);
    CHECK(slurp(dir() / "fig.svg") == slurp(dir() / "ab" / "ablation.svg"));

    // without --toy-encoders the run degrades to the toy encoders
    CHECK(cli("--config " + q(dir() / "cfg.json") + " train " + m + cache + folds +
              "--model M1 --fold 0 --out " + q(dir() / "m1")) == 0);
    CHECK(slurp(dir() / "cli.log").find("using toy encoders") != std::string::npos);

    write(dir() / "boom.json", "{\"learning_rate\": 1e300, \"max_epochs\": 5}");
    CHECK(cli("--toy-encoders --config " + q(dir() / "boom.json") + " train " + m + cache + folds +
              "--model M4 --fold 0 --out " + q(dir() / "boom")) == 3);
  }
}
