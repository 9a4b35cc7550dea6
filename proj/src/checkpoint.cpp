#include "capgan/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "capgan/error.hpp"

namespace capgan {

namespace {

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::uint64_t hash_from_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header = {
      {"magic", kCheckpointMagic},
      {"kind", ckpt.kind},
      {"config", ckpt.config},
      {"vocab_hash", hash_hex(ckpt.vocab_hash)},
  };
  nlohmann::json plist = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.params)
    plist.push_back({{"name", name}, {"shape", t.shape}});
  header["params"] = plist;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("checkpoint: cannot write " + path);
  out << header.dump() << "\n";
  for (const auto& [name, t] : ckpt.params) {
    if (!t.all_finite())
      throw NumericError("checkpoint: non-finite values in parameter " + name);
    write_doubles(out, t.data);
  }
  if (!out) throw IoError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind,
                           std::uint64_t expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint: missing header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: bad header in " + path + ": " + e.what());
  }
  if (!header.contains("magic") || header["magic"] != kCheckpointMagic)
    throw DataError("checkpoint: " + path + " is not a " + kCheckpointMagic + " file");

  Checkpoint ckpt;
  try {
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.vocab_hash = hash_from_hex(header.at("vocab_hash").get<std::string>());
    for (const auto& p : header.at("params")) {
      Tensor t(p.at("shape").get<std::vector<std::size_t>>());
      ckpt.params.emplace_back(p.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: malformed header field in " + path + ": " + e.what());
  }

  if (!expected_kind.empty() && ckpt.kind != expected_kind)
    throw DataError("checkpoint: " + path + " holds a '" + ckpt.kind +
                    "' model, expected '" + expected_kind + "'");
  if (expected_vocab_hash != 0 && ckpt.vocab_hash != expected_vocab_hash)
    throw IntegrityError("checkpoint: vocabulary hash mismatch in " + path);

  for (auto& [name, t] : ckpt.params) {
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != t.size() * sizeof(double))
      throw DataError("checkpoint: " + path + " truncated in parameter " + name);
    if (!t.all_finite())
      throw NumericError("checkpoint: non-finite values in parameter " + name);
  }
  char extra;
  if (in.read(&extra, 1))
    throw DataError("checkpoint: trailing bytes after parameters in " + path);
  return ckpt;
}

nlohmann::json generator_config_json(const GeneratorConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim}, {"num_layers", c.num_layers},
          {"beta", c.beta},             {"tau", c.tau},
          {"noise_dim", c.noise_dim},   {"feature_dim", c.feature_dim},
          {"max_len", c.max_len}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.vocab_size = j.at("vocab_size");
  c.embed_dim = j.at("embed_dim");
  c.hidden_dim = j.at("hidden_dim");
  c.num_layers = j.at("num_layers");
  c.beta = j.at("beta");
  c.tau = j.at("tau");
  c.noise_dim = j.at("noise_dim");
  c.feature_dim = j.at("feature_dim");
  c.max_len = j.at("max_len");
  return c;
}

nlohmann::json discriminator_config_json(const DiscriminatorConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim}, {"n_dist", c.n_dist},
          {"n_views", c.n_views},       {"feature_dim", c.feature_dim}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
  DiscriminatorConfig c;
  c.vocab_size = j.at("vocab_size");
  c.embed_dim = j.at("embed_dim");
  c.hidden_dim = j.at("hidden_dim");
  c.n_dist = j.at("n_dist");
  c.n_views = j.at("n_views");
  c.feature_dim = j.at("feature_dim");
  return c;
}

void save_generator(const std::string& path, const Generator& g,
                    std::uint64_t vocab_hash) {
  Checkpoint ckpt;
  ckpt.kind = "generator";
  ckpt.config = generator_config_json(g.config());
  ckpt.config["object_ids"] = g.object_ids();
  ckpt.vocab_hash = vocab_hash;
  g.visit_params([&](const std::string& n, const Tensor& t) {
    ckpt.params.emplace_back(n, t);
  });
  save_checkpoint(path, ckpt);
}

Generator load_generator(const std::string& path, std::uint64_t expected_vocab_hash) {
  Checkpoint ckpt = load_checkpoint(path, "generator", expected_vocab_hash);
  GeneratorConfig c;
  std::vector<int> object_ids;
  try {
    c = generator_config_from_json(ckpt.config);
    object_ids = ckpt.config.at("object_ids").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: bad generator config in " + path + ": " + e.what());
  }
  Generator g(c, object_ids, 0);
  std::size_t i = 0;
  g.visit_params([&](const std::string& n, Tensor& t) {
    if (i >= ckpt.params.size() || ckpt.params[i].first != n ||
        ckpt.params[i].second.shape != t.shape)
      throw DataError("checkpoint: parameter list mismatch at " + n + " in " + path);
    t = ckpt.params[i++].second;
  });
  if (i != ckpt.params.size())
    throw DataError("checkpoint: extra parameters in " + path);
  return g;
}

void save_discriminator(const std::string& path, const Discriminator& d,
                        std::uint64_t vocab_hash) {
  Checkpoint ckpt;
  ckpt.kind = "discriminator";
  ckpt.config = discriminator_config_json(d.config());
  ckpt.vocab_hash = vocab_hash;
  d.visit_params([&](const std::string& n, const Tensor& t) {
    ckpt.params.emplace_back(n, t);
  });
  save_checkpoint(path, ckpt);
}

Discriminator load_discriminator(const std::string& path,
                                 std::uint64_t expected_vocab_hash) {
  Checkpoint ckpt = load_checkpoint(path, "discriminator", expected_vocab_hash);
  DiscriminatorConfig c;
  try {
    c = discriminator_config_from_json(ckpt.config);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: bad discriminator config in " + path + ": " + e.what());
  }
  Discriminator d(c, 0);
  std::size_t i = 0;
  d.visit_params([&](const std::string& n, Tensor& t) {
    if (i >= ckpt.params.size() || ckpt.params[i].first != n ||
        ckpt.params[i].second.shape != t.shape)
      throw DataError("checkpoint: parameter list mismatch at " + n + " in " + path);
    t = ckpt.params[i++].second;
  });
  if (i != ckpt.params.size())
    throw DataError("checkpoint: extra parameters in " + path);
  return d;
}

}  // namespace capgan
