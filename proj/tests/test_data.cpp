#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "capgan/dataset.hpp"
#include "capgan/error.hpp"
#include "capgan/metrics.hpp"
#include "capgan/vocab.hpp"
#include "doctest.h"

using namespace capgan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("capgan_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

ToyWorldConfig small_config() {
  ToyWorldConfig c;
  c.n_train = 40;
  c.n_val = 8;
  c.n_test = 8;
  return c;
}

}  // namespace

TEST_CASE("tokenize: lowercase, final punctuation stripped") {
  CHECK(tokenize("A red Cat sits.") == std::vector<std::string>{"a", "red", "cat", "sits"});
  CHECK(tokenize("  Hello   WORLD!! ") == std::vector<std::string>{"hello", "world"});
  CHECK(tokenize("") == std::vector<std::string>{});
}

TEST_CASE("vocabulary: reserved ids, round trip, object marking") {
  Vocabulary v({"cat", "dog", "runs"}, {"cat", "dog"});
  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.id("cat") == Vocabulary::kReserved);
  CHECK(v.id("missing") == Vocabulary::kUnk);
  CHECK(v.object_ids().size() == 2);
  CHECK_THROWS_AS(Vocabulary({"a"}, {"zebra"}), ShapeError);

  TempDir dir("vocab");
  v.save(dir.str() + "/vocab.txt");
  Vocabulary w = Vocabulary::load(dir.str() + "/vocab.txt", {"cat", "dog"});
  CHECK(w.hash() == v.hash());
  CHECK(w.id("runs") == v.id("runs"));
}

TEST_CASE("caption round trip through text and back") {
  Dataset ds = generate_toy_dataset(small_config(), 7);
  for (const auto& item : ds.train.items)
    for (std::size_t r = 0; r < item.references.size(); ++r) {
      auto re = ds.vocab.encode(tokenize(item.references[r]));
      CHECK(re == item.ref_ids[r].ids);
      auto text = join_tokens(ds.vocab.decode(item.ref_ids[r].ids));
      CHECK(text == join_tokens(tokenize(item.references[r])));
    }
}

TEST_CASE("toy dataset: fixed seed is byte-identical on disk") {
  TempDir a("toy_a"), b("toy_b");
  save_dataset(generate_toy_dataset(small_config(), 123), a.str());
  save_dataset(generate_toy_dataset(small_config(), 123), b.str());
  for (const char* f : {"manifest.json", "vocab.txt", "train.jsonl", "val.jsonl", "test.jsonl"})
    CHECK(file_hash(a.str() + "/" + f) == file_hash(b.str() + "/" + f));

  TempDir c("toy_c");
  save_dataset(generate_toy_dataset(small_config(), 124), c.str());
  CHECK(file_hash(a.str() + "/train.jsonl") != file_hash(c.str() + "/train.jsonl"));
}

TEST_CASE("toy dataset: split hygiene and reload fidelity") {
  TempDir dir("toy_reload");
  Dataset ds = generate_toy_dataset(small_config(), 5);
  save_dataset(ds, dir.str());
  Dataset back = load_dataset(dir.str());
  CHECK(back.train.items.size() == ds.train.items.size());
  CHECK(back.vocab.hash() == ds.vocab.hash());
  CHECK(back.train.items[0].references == ds.train.items[0].references);
  CHECK(back.train.items[0].x_c.data == ds.train.items[0].x_c.data);

  // tampering is detected
  {
    std::ofstream f(dir.str() + "/train.jsonl", std::ios::app);
    f << "\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.str()), IntegrityError);
}

TEST_CASE("toy dataset: every item has k references and valid x_o") {
  Dataset ds = generate_toy_dataset(small_config(), 9);
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& it : split->items) {
      CHECK(it.references.size() == ds.config.refs_per_image);
      CHECK(it.x_o.size() == ds.object_words.size());
      double mx = 0;
      for (double v : it.x_o) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        mx = std::max(mx, v);
      }
      CHECK(mx == 1.0);
    }
}

TEST_CASE("toy dataset: degenerate skew collapses references") {
  ToyWorldConfig c = small_config();
  c.synonym_skew = 1.0;
  Dataset ds = generate_toy_dataset(c, 3);
  for (const auto& it : ds.train.items)
    for (const auto& r : it.references) CHECK(r == it.references[0]);
}

TEST_CASE("toy dataset: invalid grammar production is named") {
  ToyWorldConfig c = small_config();
  c.templates_override = {"a C O is A in the L", "the qwormp O"};
  CHECK_THROWS_WITH_AS(generate_toy_dataset(c, 1), doctest::Contains("qwormp"), ShapeError);
  c.templates_override = {"a the is"};
  CHECK_THROWS_AS(generate_toy_dataset(c, 1), ShapeError);
}

TEST_CASE("toy dataset: default config reference sets are diverse") {
  ToyWorldConfig c;  // defaults
  c.n_train = 150;   // enough scenes for a stable mean
  c.n_val = 8;
  c.n_test = 8;
  Dataset ds = generate_toy_dataset(c, 2026);
  double sum = 0;
  for (const auto& it : ds.train.items) {
    std::vector<metrics::TokenSeq> set;
    for (const auto& r : it.references) set.push_back(tokenize(r));
    sum += metrics::div_n(set, 2);
  }
  CHECK(sum / ds.train.items.size() > 0.5);
}

TEST_CASE("build_vocabulary: count threshold and ordering") {
  std::vector<std::vector<std::string>> corpus = {{"a", "a", "b"}, {"a"}};
  Vocabulary v = build_vocabulary(corpus, 2);
  CHECK(v.contains("a"));
  CHECK(!v.contains("b"));
  CHECK(v.id("b") == Vocabulary::kUnk);

  Vocabulary v1 = build_vocabulary(corpus, 1);
  CHECK(v1.contains("a"));
  CHECK(v1.contains("b"));
  // descending count order: a before b
  CHECK(v1.id("a") < v1.id("b"));

  Vocabulary v2 = build_vocabulary(corpus, 1);
  CHECK(v2.hash() == v1.hash());

  CHECK_THROWS_AS(build_vocabulary({}, 1), ContractError);
  CHECK_THROWS_AS(build_vocabulary(corpus, 0), ParamError);
}

TEST_CASE("coco loader: minimal valid file") {
  TempDir dir("coco_min");
  {
    std::ofstream f(dir.str() + "/ann.json");
    f << R"({"images":[{"id":17}],"annotations":[{"image_id":17,"caption":"A dog Runs.","id":1}]})";
  }
  auto corpus = load_coco_captions(dir.str() + "/ann.json");
  REQUIRE(corpus.size() == 1);
  REQUIRE(corpus.at(17).size() == 1);
  CHECK(corpus.at(17)[0] == "a dog runs");
}

TEST_CASE("coco loader: unknown image id kept with warning") {
  TempDir dir("coco_warn");
  {
    std::ofstream f(dir.str() + "/ann.json");
    f << R"({"images":[{"id":1}],"annotations":[{"image_id":2,"caption":"a cat","id":9}]})";
  }
  std::vector<std::string> warnings;
  auto corpus = load_coco_captions(dir.str() + "/ann.json", &warnings);
  CHECK(corpus.count(2) == 1);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("unknown image id 2") != std::string::npos);
}

TEST_CASE("coco loader: truncated file reports byte offset") {
  TempDir dir("coco_trunc");
  {
    std::ofstream f(dir.str() + "/ann.json");
    f << R"({"images":[{"id":1}],"anno)";
  }
  CHECK_THROWS_WITH_AS(load_coco_captions(dir.str() + "/ann.json"),
                       doctest::Contains("byte"), IoError);
}

TEST_CASE("coco loader: missing keys named") {
  TempDir dir("coco_keys");
  {
    std::ofstream f(dir.str() + "/ann.json");
    f << R"({"images":[]})";
  }
  CHECK_THROWS_WITH_AS(load_coco_captions(dir.str() + "/ann.json"),
                       doctest::Contains("annotations"), DataError);
  {
    std::ofstream f(dir.str() + "/ann2.json");
    f << R"({"annotations":[{"image_id":1,"id":2}]})";
  }
  CHECK_THROWS_WITH_AS(load_coco_captions(dir.str() + "/ann2.json"),
                       doctest::Contains("caption"), DataError);
}
