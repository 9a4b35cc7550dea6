#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "capgan/dataset.hpp"
#include "capgan/vocab.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace capgan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) {
    path = fs::temp_directory_path() /
           ("capgan_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string bin() {
  const char* b = std::getenv("CAPGAN_BIN");
  REQUIRE_MESSAGE(b != nullptr, "CAPGAN_BIN must point at the CLI binary");
  return b;
}

int run(const std::string& args) {
  std::string cmd = bin() + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& p) {
  std::ifstream in(p);
  REQUIRE_MESSAGE(in.good(), "missing file: " << p);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_tiny_config(const std::string& path) {
  std::ofstream out(path);
  out << "[data]\nn_train = 24\nn_val = 6\nn_test = 6\nfeature_dim = 8\n"
      << "[gen]\nembed_dim = 8\nhidden_dim = 12\nnum_layers = 2\n"
      << "noise_dim = 4\nmax_len = 12\n"
      << "[disc]\nembed_dim = 8\nhidden_dim = 12\nn_dist = 3\nn_views = 2\n"
      << "[train]\nset_size = 3\nbatch_images = 4\npretrain_epochs = 2\n"
      << "disc_pretrain_steps = 6\ngan_g_steps = 1\nn_d = 2\nacc_gate = 0.51\n"
      << "acc_probe_images = 4\nmax_recovery_steps = 2000\nmonitor_every = 2\n";
}

}  // namespace

TEST_CASE("cli: pipeline smoke test with deterministic artifacts") {
  TempDir dir("pipe");
  std::string cfg = dir.str() + "/tiny.ini";
  write_tiny_config(cfg);
  std::string d = dir.str();

  // make-data twice with the same seed -> byte-identical splits
  REQUIRE(run("make-data --config " + cfg + " --seed 7 --out " + d + "/data") == 0);
  REQUIRE(run("make-data --config " + cfg + " --seed 7 --out " + d + "/data2") == 0);
  for (const char* f : {"manifest.json", "train.jsonl", "val.jsonl", "test.jsonl"})
    CHECK(slurp(d + "/data/" + f) == slurp(d + "/data2/" + f));

  // training phases produce checkpoints and reproducible logs
  REQUIRE(run("pretrain-gen --config " + cfg + " --seed 11 --data " + d +
              "/data --out " + d + "/pg") == 0);
  REQUIRE(run("pretrain-gen --config " + cfg + " --seed 11 --data " + d +
              "/data --out " + d + "/pg2") == 0);
  CHECK(slurp(d + "/pg/log.jsonl") == slurp(d + "/pg2/log.jsonl"));
  CHECK(slurp(d + "/pg/generator.ckpt") == slurp(d + "/pg2/generator.ckpt"));

  REQUIRE(run("pretrain-disc --config " + cfg + " --seed 12 --data " + d +
              "/data --out " + d + "/pd") == 0);
  REQUIRE(fs::is_regular_file(d + "/pd/discriminator.ckpt"));

  // missing pretrain checkpoint is a precondition error (exit 2)
  CHECK(run("train-gan --config " + cfg + " --seed 13 --data " + d +
            "/data --gen " + d + "/absent.ckpt --disc " + d +
            "/pd/discriminator.ckpt --out " + d + "/gx") == 2);

  REQUIRE(run("train-gan --config " + cfg + " --seed 13 --data " + d +
              "/data --gen " + d + "/pg/generator.ckpt --disc " + d +
              "/pd/discriminator.ckpt --out " + d + "/gan") == 0);
  REQUIRE(fs::is_regular_file(d + "/gan/generator.ckpt"));
  REQUIRE(fs::is_regular_file(d + "/gan/log.jsonl"));

  // generation: p rows per image, rank 1 has the highest log probability
  REQUIRE(run("generate --ckpt " + d + "/gan/generator.ckpt --data " + d +
              "/data --split test --mode sample --p 3 --seed 21 --out " + d +
              "/gen.jsonl") == 0);
  REQUIRE(run("generate --ckpt " + d + "/gan/generator.ckpt --data " + d +
              "/data --split test --mode sample --p 3 --seed 21 --out " + d +
              "/gen2.jsonl") == 0);
  CHECK(slurp(d + "/gen.jsonl") == slurp(d + "/gen2.jsonl"));

  std::map<long long, std::vector<std::pair<std::size_t, double>>> per_image;
  {
    std::ifstream in(d + "/gen.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      nlohmann::json j = nlohmann::json::parse(line);
      per_image[j["image_id"].get<long long>()].push_back(
          {j["rank"].get<std::size_t>(), j["log_prob"].get<double>()});
    }
  }
  CHECK(per_image.size() == 6);
  for (const auto& [id, rows] : per_image) {
    CHECK(rows.size() == 3);
    double best = rows[0].second;
    for (const auto& [rank, lp] : rows) {
      CHECK(lp <= best + 1e-12);
      if (rank == 1) CHECK(lp == best);
    }
  }

  // beam decoding is deterministic without a seed
  REQUIRE(run("generate --ckpt " + d + "/gan/generator.ckpt --data " + d +
              "/data --mode beam --beam-width 3 --seed 1 --out " + d +
              "/beam1.jsonl") == 0);
  REQUIRE(run("generate --ckpt " + d + "/gan/generator.ckpt --data " + d +
              "/data --mode beam --beam-width 3 --seed 2 --out " + d +
              "/beam2.jsonl") == 0);
  CHECK(slurp(d + "/beam1.jsonl") == slurp(d + "/beam2.jsonl"));

  // stats artifacts
  REQUIRE(run("stats --generated " + d + "/gen.jsonl --data " + d +
              "/data --out " + d + "/stats") == 0);
  std::string report = slurp(d + "/stats/report.csv");
  CHECK(report.find("5 of 5") != std::string::npos);
  CHECK(report.find("1 of 5") != std::string::npos);
  std::string plot = slurp(d + "/stats/plot_data.json");
  CHECK(plot.find("vocab_curve") != std::string::npos);
  CHECK(plot.find("count_ratio") != std::string::npos);
  CHECK(fs::is_regular_file(d + "/stats/count_ratio_1.csv"));
  CHECK(fs::is_regular_file(d + "/stats/count_ratio_2.csv"));
  CHECK(fs::is_regular_file(d + "/stats/count_ratio_3.csv"));
  CHECK(fs::is_regular_file(d + "/stats/repeated_captions.csv"));
}

TEST_CASE("cli: training references scored by stats are never novel") {
  TempDir dir("novel");
  std::string cfg = dir.str() + "/tiny.ini";
  write_tiny_config(cfg);
  std::string d = dir.str();
  REQUIRE(run("make-data --config " + cfg + " --seed 7 --out " + d + "/data") == 0);

  // fabricate a "generated" file straight from the training references
  Dataset ds = load_dataset(d + "/data");
  {
    std::ofstream out(d + "/fake.jsonl");
    for (std::size_t i = 0; i < 6; ++i) {
      const DatasetItem& item = ds.train.items[i];
      for (std::size_t r = 0; r < 3; ++r) {
        nlohmann::json j = {{"image_id", item.image_id},
                            {"rank", r + 1},
                            {"caption", item.references[r]},
                            {"log_prob", -1.0 * static_cast<double>(r)}};
        out << j.dump() << "\n";
      }
    }
  }
  REQUIRE(run("stats --generated " + d + "/fake.jsonl --data " + d +
              "/data --out " + d + "/stats") == 0);
  std::string report = slurp(d + "/stats/report.csv");
  // both variants end with pct_novel 0
  std::istringstream in(report);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    CHECK(line.substr(line.rfind(',') + 1) == "0");
  }
}

TEST_CASE("cli: exit codes for config, data and usage errors") {
  TempDir dir("exit");
  std::string cfg = dir.str() + "/tiny.ini";
  write_tiny_config(cfg);
  std::string d = dir.str();

  CHECK(run("make-data --config " + cfg +
            " --set data.synonym_skew=bogus --seed 1 --out " + d + "/x") == 2);
  CHECK(run("stats --generated " + d + "/missing.jsonl --data " + d +
            "/nodata --out " + d + "/y") == 3);
  CHECK(run("definitely-not-a-command") == 2);
  CHECK(run("--help") == 0);
}
