#include "capgan/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "capgan/error.hpp"
#include "capgan/rng.hpp"
#include "json.hpp"

namespace capgan {

namespace fs = std::filesystem;
using nlohmann::json;

// --------------------------------------------------------------------------
// Toy grammar tables

namespace {

struct SynonymSet {
  const char* canonical;
  std::vector<const char*> surfaces;  // surfaces[0] is the dominant form
};

const std::vector<SynonymSet>& objects() {
  static const std::vector<SynonymSet> v = {
      {"cat", {"cat", "kitten", "feline", "tabby", "tomcat", "mouser"}},
      {"dog", {"dog", "puppy", "hound", "pooch", "mutt", "terrier"}},
      {"bird", {"bird", "sparrow", "birdie", "finch", "wren", "songbird"}},
      {"horse", {"horse", "pony", "stallion", "mare", "colt", "steed"}},
      {"cow", {"cow", "calf", "heifer", "bovine", "bull", "ox"}},
      {"sheep", {"sheep", "lamb", "ewe", "ram", "mouflon", "yearling"}},
      {"car", {"car", "automobile", "sedan", "hatchback", "coupe", "roadster"}},
      {"bus", {"bus", "coach", "minibus", "omnibus", "shuttle", "trolley"}},
      {"truck", {"truck", "lorry", "pickup", "hauler", "rig", "flatbed"}},
      {"bike", {"bike", "bicycle", "cycle", "tandem", "fixie", "unicycle"}},
      {"boat", {"boat", "ship", "vessel", "dinghy", "sailboat", "ferry"}},
      {"train", {"train", "railcar", "locomotive", "express", "freighter", "monorail"}},
  };
  return v;
}

const std::vector<SynonymSet>& colors() {
  static const std::vector<SynonymSet> v = {
      {"red", {"red", "crimson", "scarlet", "ruby", "cherry"}},
      {"blue", {"blue", "azure", "cobalt", "navy", "sapphire"}},
      {"green", {"green", "emerald", "olive", "jade", "lime"}},
      {"black", {"black", "dark", "ebony", "jet", "sooty"}},
      {"white", {"white", "pale", "ivory", "snowy", "chalky"}},
      {"brown", {"brown", "tan", "chestnut", "bronze", "umber"}},
      {"yellow", {"yellow", "golden", "amber", "blond", "saffron"}},
      {"gray", {"gray", "silver", "ashen", "slate", "smoky"}},
  };
  return v;
}

const std::vector<SynonymSet>& sizes() {
  static const std::vector<SynonymSet> v = {
      {"small", {"small", "petite", "compact", "modest", "slight"}},
      {"big", {"big", "sizable", "bulky", "hefty", "broad"}},
      {"tiny", {"tiny", "miniature", "minuscule", "diminutive", "microscopic"}},
      {"large", {"large", "grand", "vast", "ample", "expansive"}},
      {"huge", {"huge", "massive", "enormous", "gigantic", "immense"}},
      {"little", {"little", "wee", "dainty", "smallish", "puny"}},
  };
  return v;
}

const std::vector<SynonymSet>& actions() {
  static const std::vector<SynonymSet> v = {
      {"sitting", {"sitting", "seated", "perched", "crouched", "settled", "squatting"}},
      {"standing", {"standing", "upright", "stationed", "posted", "planted", "poised"}},
      {"running", {"running", "racing", "sprinting", "dashing", "galloping", "jogging"}},
      {"sleeping", {"sleeping", "napping", "dozing", "snoozing", "slumbering", "drowsing"}},
      {"jumping", {"jumping", "leaping", "hopping", "bounding", "vaulting", "springing"}},
      {"walking", {"walking", "strolling", "wandering", "ambling", "roaming", "sauntering"}},
      {"eating", {"eating", "feeding", "grazing", "munching", "nibbling", "chewing"}},
      {"waiting", {"waiting", "pausing", "lingering", "idling", "loitering", "tarrying"}},
      {"resting", {"resting", "relaxing", "lounging", "reclining", "reposing", "unwinding"}},
      {"moving", {"moving", "traveling", "drifting", "gliding", "cruising", "coasting"}},
  };
  return v;
}

const std::vector<SynonymSet>& locations() {
  static const std::vector<SynonymSet> v = {
      {"park", {"park", "playground", "parkland", "commons", "greenspace"}},
      {"street", {"street", "road", "avenue", "boulevard", "lane"}},
      {"field", {"field", "meadow", "pasture", "prairie", "grassland"}},
      {"house", {"house", "home", "cottage", "bungalow", "cabin"}},
      {"beach", {"beach", "shore", "seaside", "coastline", "sandbar"}},
      {"garden", {"garden", "orchard", "arboretum", "greenhouse", "plot"}},
      {"market", {"market", "bazaar", "marketplace", "fair", "emporium"}},
      {"station", {"station", "terminal", "depot", "platform", "junction"}},
      {"bridge", {"bridge", "overpass", "viaduct", "footbridge", "crossing"}},
      {"yard", {"yard", "courtyard", "patio", "forecourt", "enclosure"}},
  };
  return v;
}

// Slot letters: C color, Z size, O object, A action, L location.
const std::vector<const char*>& templates() {
  static const std::vector<const char*> v = {
      "a C O is A in the L",
      "the Z O is A near the L",
      "there is a C O A at the L",
      "a Z C O A by the L",
      "one O can be seen A around the L",
  };
  return v;
}

struct Scene {
  std::size_t object, color, size, action, location;
};

std::size_t pick_skewed(Rng& rng, std::size_t n, double skew) {
  if (n == 1) return 0;
  double u = rng.uniform();
  if (u < skew) return 0;
  double rest = (u - skew) / (1.0 - skew);
  std::size_t i = 1 + static_cast<std::size_t>(rest * static_cast<double>(n - 1));
  return std::min(i, n - 1);
}

std::string realize(const Scene& sc, Rng& rng, double skew,
                    const std::vector<std::string>& tpls) {
  const std::string& tpl = tpls[pick_skewed(rng, tpls.size(), skew)];
  std::ostringstream out;
  std::istringstream in(tpl);
  std::string word;
  bool first = true;
  auto surface = [&](const std::vector<SynonymSet>& cat, std::size_t idx) {
    const auto& s = cat[idx].surfaces;
    return s[pick_skewed(rng, s.size(), skew)];
  };
  while (in >> word) {
    std::string w = word;
    if (word == "C") w = surface(colors(), sc.color);
    else if (word == "Z") w = surface(sizes(), sc.size);
    else if (word == "O") w = surface(objects(), sc.object);
    else if (word == "A") w = surface(actions(), sc.action);
    else if (word == "L") w = surface(locations(), sc.location);
    if (!first) out << ' ';
    out << w;
    first = false;
  }
  return out.str();
}

std::size_t attr_onehot_dim() {
  return objects().size() + colors().size() + sizes().size() + actions().size() +
         locations().size();
}

}  // namespace

std::vector<std::string> toy_grammar_inventory() {
  std::set<std::string> words;
  for (const char* tpl : templates()) {
    std::istringstream in(tpl);
    std::string w;
    while (in >> w)
      if (w != "C" && w != "Z" && w != "O" && w != "A" && w != "L") words.insert(w);
  }
  for (const auto* cat : {&objects(), &colors(), &sizes(), &actions(), &locations()})
    for (const auto& s : *cat)
      for (const char* w : s.surfaces) words.insert(w);
  return {words.begin(), words.end()};
}

std::vector<std::string> toy_object_words() {
  std::vector<std::string> v;
  for (const auto& s : objects()) v.push_back(s.canonical);
  return v;
}

std::vector<std::string> ToyWorldConfig::active_templates() const {
  if (!templates_override.empty()) return templates_override;
  std::vector<std::string> v;
  for (const char* t : templates()) v.push_back(t);
  return v;
}

void ToyWorldConfig::validate() const {
  if (refs_per_image < 1) throw ParamError("ToyWorldConfig: refs_per_image must be >= 1");
  if (feature_dim < 1) throw ParamError("ToyWorldConfig: feature_dim must be >= 1");
  if (n_train == 0 || n_val == 0 || n_test == 0)
    throw ParamError("ToyWorldConfig: split sizes must be positive");
  if (!(synonym_skew > 0.0 && synonym_skew <= 1.0))
    throw ParamError("ToyWorldConfig: synonym_skew must be in (0, 1]");
  if (feature_noise < 0.0) throw ParamError("ToyWorldConfig: feature_noise must be >= 0");

  // every production must expand within the built-in word inventory
  std::set<std::string> inventory;
  for (const auto& w : toy_grammar_inventory()) inventory.insert(w);
  for (const auto& tpl : active_templates()) {
    std::istringstream in(tpl);
    std::string w;
    bool has_slot = false;
    while (in >> w) {
      if (w == "C" || w == "Z" || w == "O" || w == "A" || w == "L") {
        has_slot = true;
        continue;
      }
      if (!inventory.count(w))
        throw ShapeError("ToyWorldConfig: invalid grammar production '" + tpl +
                         "': unknown word '" + w + "'");
    }
    if (!has_slot)
      throw ShapeError("ToyWorldConfig: invalid grammar production '" + tpl +
                       "': no attribute slot");
  }
}

const DatasetSplit& Dataset::split(const std::string& tag) const {
  if (tag == "train") return train;
  if (tag == "val") return val;
  if (tag == "test") return test;
  throw ParamError("Dataset: unknown split '" + tag + "'");
}

std::vector<std::vector<std::string>> Dataset::training_corpus() const {
  std::vector<std::vector<std::string>> out;
  for (const auto& it : train.items)
    for (const auto& r : it.references) out.push_back(tokenize(r));
  return out;
}

Dataset generate_toy_dataset(const ToyWorldConfig& config, std::uint64_t seed) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.seed = seed;
  ds.object_words = toy_object_words();
  ds.vocab = Vocabulary(toy_grammar_inventory(), ds.object_words);

  // Mixing matrix is a function of the seed only, shared across splits.
  std::size_t adim = attr_onehot_dim();
  Rng mix_rng(seed ^ 0x5ca1ab1e5eedull);
  Tensor mix({adim, config.feature_dim});
  double scale = 1.0 / std::sqrt(static_cast<double>(adim));
  for (double& v : mix.data) v = mix_rng.gaussian() * scale;

  std::vector<std::string> tpls = config.active_templates();
  auto make_split = [&](const std::string& tag, std::size_t count, long long id_base,
                        std::uint64_t sub_seed) {
    DatasetSplit split;
    split.tag = tag;
    Rng rng(sub_seed);
    for (std::size_t i = 0; i < count; ++i) {
      Scene sc{static_cast<std::size_t>(rng.uniform() * objects().size()),
               static_cast<std::size_t>(rng.uniform() * colors().size()),
               static_cast<std::size_t>(rng.uniform() * sizes().size()),
               static_cast<std::size_t>(rng.uniform() * actions().size()),
               static_cast<std::size_t>(rng.uniform() * locations().size())};
      sc.object = std::min(sc.object, objects().size() - 1);
      sc.color = std::min(sc.color, colors().size() - 1);
      sc.size = std::min(sc.size, sizes().size() - 1);
      sc.action = std::min(sc.action, actions().size() - 1);
      sc.location = std::min(sc.location, locations().size() - 1);

      DatasetItem item;
      item.image_id = id_base + static_cast<long long>(i);

      Tensor onehot({adim});
      std::size_t off = 0;
      onehot.data[off + sc.object] = 1.0;
      off += objects().size();
      onehot.data[off + sc.color] = 1.0;
      off += colors().size();
      onehot.data[off + sc.size] = 1.0;
      off += sizes().size();
      onehot.data[off + sc.action] = 1.0;
      off += actions().size();
      onehot.data[off + sc.location] = 1.0;

      item.x_c = Tensor({config.feature_dim});
      gemm(false, false, 1, config.feature_dim, adim, onehot.data.data(),
           mix.data.data(), item.x_c.data.data(), true);
      for (double& v : item.x_c.data) v += rng.gaussian() * config.feature_noise;

      item.x_o.assign(objects().size(), 0.0);
      item.x_o[sc.object] = 1.0;

      for (std::size_t r = 0; r < config.refs_per_image; ++r) {
        std::string text = realize(sc, rng, config.synonym_skew, tpls);
        item.references.push_back(text);
        Caption cap;
        cap.ids = ds.vocab.encode(tokenize(text));
        for (int id : cap.ids)
          if (id == Vocabulary::kUnk)
            throw ShapeError("toy grammar produced a word outside the vocabulary: " + text);
        item.ref_ids.push_back(std::move(cap));
      }
      split.items.push_back(std::move(item));
    }
    return split;
  };

  Rng seeder(seed);
  std::uint64_t s_train = seeder.derive(), s_val = seeder.derive(), s_test = seeder.derive();
  ds.train = make_split("train", config.n_train, 1, s_train);
  ds.val = make_split("val", config.n_val, 100000, s_val);
  ds.test = make_split("test", config.n_test, 200000, s_test);
  return ds;
}

// --------------------------------------------------------------------------
// Persistence

namespace {

json config_to_json(const ToyWorldConfig& c) {
  return json{{"refs_per_image", c.refs_per_image},
              {"feature_dim", c.feature_dim},
              {"feature_noise", c.feature_noise},
              {"n_train", c.n_train},
              {"n_val", c.n_val},
              {"n_test", c.n_test},
              {"synonym_skew", c.synonym_skew},
              {"templates_override", c.templates_override}};
}

ToyWorldConfig config_from_json(const json& j) {
  ToyWorldConfig c;
  c.refs_per_image = j.at("refs_per_image").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.feature_noise = j.at("feature_noise").get<double>();
  c.n_train = j.at("n_train").get<std::size_t>();
  c.n_val = j.at("n_val").get<std::size_t>();
  c.n_test = j.at("n_test").get<std::size_t>();
  c.synonym_skew = j.at("synonym_skew").get<double>();
  c.templates_override = j.value("templates_override", std::vector<std::string>{});
  return c;
}

void write_split(const DatasetSplit& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_dataset: cannot write " + path);
  for (const auto& it : split.items) {
    json rec{{"image_id", it.image_id},
             {"x_c", it.x_c.data},
             {"x_o", it.x_o},
             {"references", it.references}};
    out << rec.dump() << "\n";
  }
}

DatasetSplit read_split(const std::string& tag, const std::string& path,
                        const Vocabulary& vocab, std::size_t feature_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot read " + path);
  DatasetSplit split;
  split.tag = tag;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    DatasetItem it;
    it.image_id = rec.at("image_id").get<long long>();
    it.x_c = Tensor::vec(rec.at("x_c").get<std::vector<double>>());
    if (it.x_c.size() != feature_dim)
      throw DataError("load_dataset: x_c dimension mismatch in " + path);
    it.x_o = rec.at("x_o").get<std::vector<double>>();
    it.references = rec.at("references").get<std::vector<std::string>>();
    for (const auto& r : it.references) {
      Caption c;
      c.ids = vocab.encode(tokenize(r));
      it.ref_ids.push_back(std::move(c));
    }
    split.items.push_back(std::move(it));
  }
  return split;
}

}  // namespace

std::uint64_t file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("file_hash: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  return fnv1a64(s.data(), s.size());
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("save_dataset: cannot create directory " + dir);

  ds.vocab.save(dir + "/vocab.txt");
  write_split(ds.train, dir + "/train.jsonl");
  write_split(ds.val, dir + "/val.jsonl");
  write_split(ds.test, dir + "/test.jsonl");

  json manifest{{"format", "capgan-toy-v1"},
                {"tokenizer", kTokenizerVersion},
                {"seed", ds.seed},
                {"config", config_to_json(ds.config)},
                {"object_words", ds.object_words},
                {"hashes",
                 {{"vocab.txt", file_hash(dir + "/vocab.txt")},
                  {"train.jsonl", file_hash(dir + "/train.jsonl")},
                  {"val.jsonl", file_hash(dir + "/val.jsonl")},
                  {"test.jsonl", file_hash(dir + "/test.jsonl")}}}};
  std::ofstream out(dir + "/manifest.json", std::ios::binary);
  if (!out) throw IoError("save_dataset: cannot write manifest");
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json", std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot read " + dir + "/manifest.json");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::parse_error& e) {
    throw IoError(std::string("load_dataset: manifest parse error: ") + e.what());
  }
  if (manifest.value("format", "") != "capgan-toy-v1")
    throw IntegrityError("load_dataset: unknown manifest format");
  if (manifest.value("tokenizer", "") != kTokenizerVersion)
    throw IntegrityError("load_dataset: tokenizer version mismatch");

  for (const auto& [name, h] : manifest.at("hashes").items()) {
    std::uint64_t actual = file_hash(dir + "/" + name);
    if (actual != h.get<std::uint64_t>())
      throw IntegrityError("load_dataset: hash mismatch for " + name);
  }

  Dataset ds;
  ds.seed = manifest.at("seed").get<std::uint64_t>();
  ds.config = config_from_json(manifest.at("config"));
  ds.object_words = manifest.at("object_words").get<std::vector<std::string>>();
  ds.vocab = Vocabulary::load(dir + "/vocab.txt", ds.object_words);
  ds.train = read_split("train", dir + "/train.jsonl", ds.vocab, ds.config.feature_dim);
  ds.val = read_split("val", dir + "/val.jsonl", ds.vocab, ds.config.feature_dim);
  ds.test = read_split("test", dir + "/test.jsonl", ds.vocab, ds.config.feature_dim);

  std::set<long long> seen;
  for (const auto* split : {&ds.train, &ds.val, &ds.test})
    for (const auto& it : split->items)
      if (!seen.insert(it.image_id).second)
        throw IntegrityError("load_dataset: image id " + std::to_string(it.image_id) +
                             " appears in multiple splits");
  return ds;
}

// --------------------------------------------------------------------------
// COCO captions

std::map<long long, std::vector<std::string>> load_coco_captions(
    const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_coco_captions: cannot read " + path);
  json root;
  try {
    in >> root;
  } catch (const json::parse_error& e) {
    throw IoError("load_coco_captions: parse error at byte " + std::to_string(e.byte) +
                  ": " + e.what());
  }
  if (!root.contains("annotations"))
    throw DataError("load_coco_captions: missing key 'annotations'");

  std::set<long long> known_images;
  if (root.contains("images"))
    for (const auto& img : root.at("images")) {
      if (!img.contains("id")) throw DataError("load_coco_captions: missing key 'id' in images");
      known_images.insert(img.at("id").get<long long>());
    }

  std::map<long long, std::vector<std::string>> corpus;
  for (const auto& ann : root.at("annotations")) {
    for (const char* key : {"image_id", "caption", "id"})
      if (!ann.contains(key))
        throw DataError(std::string("load_coco_captions: missing key '") + key +
                        "' in annotations");
    long long image_id = ann.at("image_id").get<long long>();
    if (!known_images.empty() && !known_images.count(image_id) && warnings)
      warnings->push_back("annotation " + std::to_string(ann.at("id").get<long long>()) +
                          " references unknown image id " + std::to_string(image_id));
    corpus[image_id].push_back(join_tokens(tokenize(ann.at("caption").get<std::string>())));
  }
  return corpus;
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t min_count,
                            const std::vector<std::string>& object_words) {
  if (min_count < 1) throw ParamError("build_vocabulary: min_count must be >= 1");
  if (corpus.empty()) throw ContractError("build_vocabulary: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& cap : corpus)
    for (const auto& w : cap) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tokens;
  for (const auto& [w, c] : items)
    if (c >= min_count) tokens.push_back(w);
  return Vocabulary(tokens, object_words);
}

}  // namespace capgan
