// Command-line front end: dataset construction, training phases, caption
// generation, and diversity statistics, all seeded and reproducible.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "capgan/checkpoint.hpp"
#include "capgan/config.hpp"
#include "capgan/dataset.hpp"
#include "capgan/error.hpp"
#include "capgan/metrics.hpp"
#include "capgan/training.hpp"

namespace fs = std::filesystem;
using namespace capgan;

namespace {

// --config file plus any number of --set key=value overrides
struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  ConfigMap resolve() const {
    ConfigMap cfg;
    if (!path.empty()) cfg = parse_config_file(path);
    for (const std::string& kv : overrides) {
      std::size_t eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ParamError("override must be key=value, got: " + kv);
      cfg[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    return cfg;
  }
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--config", args.path, "INI-style configuration file");
  cmd->add_option("--set", args.overrides,
                  "Override a config key, e.g. --set train.n_d=5 (repeatable)");
}

void ensure_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out))
    throw IoError("cannot create output directory " + out);
}

void echo_config(const ConfigMap& cfg, const std::string& out_dir,
                 std::uint64_t seed) {
  ConfigMap resolved = cfg;
  resolved["run.seed"] = std::to_string(seed);
  write_config(resolved, out_dir + "/resolved_config.ini");
}

ToyWorldConfig data_config(const ConfigMap& c) {
  ToyWorldConfig d;
  d.refs_per_image = cfg_uint_or(c, "data.refs_per_image", d.refs_per_image);
  d.feature_dim = cfg_uint_or(c, "data.feature_dim", d.feature_dim);
  d.feature_noise = cfg_double_or(c, "data.feature_noise", d.feature_noise);
  d.n_train = cfg_uint_or(c, "data.n_train", d.n_train);
  d.n_val = cfg_uint_or(c, "data.n_val", d.n_val);
  d.n_test = cfg_uint_or(c, "data.n_test", d.n_test);
  d.synonym_skew = cfg_double_or(c, "data.synonym_skew", d.synonym_skew);
  return d;
}

GeneratorConfig gen_config(const ConfigMap& c, const Dataset& ds) {
  GeneratorConfig g;
  g.vocab_size = ds.vocab.size();
  g.feature_dim = ds.config.feature_dim;
  g.embed_dim = cfg_uint_or(c, "gen.embed_dim", g.embed_dim);
  g.hidden_dim = cfg_uint_or(c, "gen.hidden_dim", g.hidden_dim);
  g.num_layers = cfg_uint_or(c, "gen.num_layers", g.num_layers);
  g.beta = cfg_double_or(c, "gen.beta", g.beta);
  g.tau = cfg_double_or(c, "gen.tau", g.tau);
  g.noise_dim = cfg_uint_or(c, "gen.noise_dim", g.noise_dim);
  g.max_len = cfg_uint_or(c, "gen.max_len", g.max_len);
  return g;
}

DiscriminatorConfig disc_config(const ConfigMap& c, const Dataset& ds) {
  DiscriminatorConfig d;
  d.vocab_size = ds.vocab.size();
  d.feature_dim = ds.config.feature_dim;
  d.embed_dim = cfg_uint_or(c, "disc.embed_dim", d.embed_dim);
  d.hidden_dim = cfg_uint_or(c, "disc.hidden_dim", d.hidden_dim);
  d.n_dist = cfg_uint_or(c, "disc.n_dist", d.n_dist);
  d.n_views = cfg_uint_or(c, "disc.n_views", d.n_views);
  return d;
}

TrainConfig train_config(const ConfigMap& c) {
  TrainConfig t;
  t.set_size = cfg_uint_or(c, "train.set_size", t.set_size);
  t.batch_images = cfg_uint_or(c, "train.batch_images", t.batch_images);
  t.pretrain_batch = cfg_uint_or(c, "train.pretrain_batch", t.pretrain_batch);
  t.pretrain_epochs = cfg_uint_or(c, "train.pretrain_epochs", t.pretrain_epochs);
  t.pretrain_lr = cfg_double_or(c, "train.pretrain_lr", t.pretrain_lr);
  t.pretrain_beta = cfg_double_or(c, "train.pretrain_beta", t.pretrain_beta);
  t.disc_pretrain_steps =
      cfg_uint_or(c, "train.disc_pretrain_steps", t.disc_pretrain_steps);
  t.disc_pretrain_lr = cfg_double_or(c, "train.disc_pretrain_lr", t.disc_pretrain_lr);
  t.gan_g_steps = cfg_uint_or(c, "train.gan_g_steps", t.gan_g_steps);
  t.n_d = cfg_uint_or(c, "train.n_d", t.n_d);
  t.lr_d = cfg_double_or(c, "train.lr_d", t.lr_d);
  t.lr_g = cfg_double_or(c, "train.lr_g", t.lr_g);
  t.acc_gate = cfg_double_or(c, "train.acc_gate", t.acc_gate);
  t.acc_probe_images = cfg_uint_or(c, "train.acc_probe_images", t.acc_probe_images);
  t.max_recovery_steps =
      cfg_uint_or(c, "train.max_recovery_steps", t.max_recovery_steps);
  t.monitor_every = cfg_uint_or(c, "train.monitor_every", t.monitor_every);
  t.feature_matching = cfg_bool_or(c, "train.feature_matching", t.feature_matching);
  return t;
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path))
    throw ContractError(what + " checkpoint missing (pretrain required): " + path);
}

// ---------------------------------------------------------------- commands

int cmd_make_data(const ConfigArgs& cargs, std::uint64_t seed,
                  const std::string& out) {
  ConfigMap cfg = cargs.resolve();
  ToyWorldConfig dc = data_config(cfg);
  Dataset ds = generate_toy_dataset(dc, seed);
  ensure_out_dir(out);
  save_dataset(ds, out);
  echo_config(cfg, out, seed);
  std::cout << "dataset: " << ds.train.items.size() << " train / "
            << ds.val.items.size() << " val / " << ds.test.items.size()
            << " test images, vocabulary " << ds.vocab.size() << "\n";
  return 0;
}

int cmd_pretrain_gen(const ConfigArgs& cargs, const std::string& data,
                     std::uint64_t seed, const std::string& out) {
  ConfigMap cfg = cargs.resolve();
  Dataset ds = load_dataset(data);
  ensure_out_dir(out);
  Rng seeds(seed);
  Generator g(gen_config(cfg, ds), ds.vocab.object_ids(), seeds.derive());
  TrainConfig tc = train_config(cfg);
  TrainLog log(out + "/log.jsonl", cfg_bool_or(cfg, "run.walltime", false));
  PretrainResult res = pretrain_generator(g, ds, tc, seeds.derive(), &log);
  save_generator(out + "/generator.ckpt", g, ds.vocab.hash());
  echo_config(cfg, out, seed);
  std::cout << "pretrain-gen: best val loss " << res.best_val_loss << " at epoch "
            << res.best_epoch << "\n";
  return 0;
}

int cmd_pretrain_disc(const ConfigArgs& cargs, const std::string& data,
                      std::uint64_t seed, const std::string& out) {
  ConfigMap cfg = cargs.resolve();
  Dataset ds = load_dataset(data);
  ensure_out_dir(out);
  Rng seeds(seed);
  Discriminator d(disc_config(cfg, ds), seeds.derive());
  TrainConfig tc = train_config(cfg);
  TrainLog log(out + "/log.jsonl", cfg_bool_or(cfg, "run.walltime", false));
  DiscPretrainResult res = pretrain_discriminator(d, ds, tc, seeds.derive(), &log);
  save_discriminator(out + "/discriminator.ckpt", d, ds.vocab.hash());
  echo_config(cfg, out, seed);
  std::cout << "pretrain-disc: val matched-vs-mismatched accuracy "
            << res.val_accuracy << "\n";
  return 0;
}

int cmd_train_gan(const ConfigArgs& cargs, const std::string& data,
                  const std::string& gen_ckpt, const std::string& disc_ckpt,
                  std::uint64_t seed, const std::string& out) {
  ConfigMap cfg = cargs.resolve();
  Dataset ds = load_dataset(data);
  require_file(gen_ckpt, "generator");
  require_file(disc_ckpt, "discriminator");
  Generator g = load_generator(gen_ckpt, ds.vocab.hash());
  Discriminator d = load_discriminator(disc_ckpt, ds.vocab.hash());
  ensure_out_dir(out);
  TrainConfig tc = train_config(cfg);
  TrainLog log(out + "/log.jsonl", cfg_bool_or(cfg, "run.walltime", false));
  GanResult res = gan_train(g, d, ds, tc, seed, &log);
  save_generator(out + "/generator.ckpt", g, ds.vocab.hash());
  save_discriminator(out + "/discriminator.ckpt", d, ds.vocab.hash());
  echo_config(cfg, out, seed);
  std::cout << "train-gan: " << res.g_steps << " G / " << res.d_steps
            << " scheduled D updates, " << res.recovery_d_steps
            << " recovery D updates over " << res.gate_activations
            << " gate activations; final probe accuracy "
            << res.final_probe_accuracy << "\n";
  return 0;
}

int cmd_generate(const std::string& ckpt, const std::string& data,
                 const std::string& split, const std::string& mode,
                 std::size_t beam_width, std::size_t p, std::uint64_t seed,
                 const std::string& out_file) {
  Dataset ds = load_dataset(data);
  Generator g = load_generator(ckpt, ds.vocab.hash());
  const DatasetSplit& sp = ds.split(split);

  std::ofstream out(out_file);
  if (!out) throw IoError("cannot write " + out_file);
  Rng rng(seed);
  for (const DatasetItem& item : sp.items) {
    std::vector<Generated> rows;
    if (mode == "sample") {
      rows = g.generate_set(item.x_c, item.x_o, p, rng);
    } else if (mode == "greedy") {
      Rng child(rng.derive());
      rows.push_back(g.generate_caption(item.x_c, item.x_o, DecodeMode::Greedy, 1,
                                        child, g.config().max_len));
    } else if (mode == "beam") {
      rows = g.beam_search(item.x_c, item.x_o, beam_width, g.config().max_len);
    } else {
      throw ParamError("unknown mode: " + mode);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Generated& a, const Generated& b) {
                       if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                       return a.caption.ids < b.caption.ids;
                     });
    for (std::size_t r = 0; r < rows.size(); ++r) {
      nlohmann::json j = {
          {"image_id", item.image_id},
          {"rank", r + 1},
          {"caption", join_tokens(ds.vocab.decode(rows[r].caption.ids))},
          {"log_prob", rows[r].log_prob}};
      out << j.dump() << "\n";
    }
  }
  if (!out) throw IoError("write failed for " + out_file);
  std::cout << "generate: wrote captions for " << sp.items.size() << " images to "
            << out_file << "\n";
  return 0;
}

struct GeneratedRow {
  long long image_id = 0;
  std::size_t rank = 0;
  std::string caption;
};

std::vector<GeneratedRow> read_generated(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<GeneratedRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("image_id") || !j.contains("caption"))
      throw DataError("bad generated record at " + path + ":" +
                      std::to_string(lineno));
    GeneratedRow r;
    r.image_id = j["image_id"].get<long long>();
    r.rank = j.value("rank", std::size_t{1});
    r.caption = j["caption"].get<std::string>();
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw DataError("no generated captions in " + path);
  return rows;
}

void write_report_row(std::ofstream& out, const std::string& variant,
                      const std::map<long long, std::vector<metrics::TokenSeq>>& sets,
                      const std::vector<metrics::TokenSeq>& training) {
  double div1 = 0, div2 = 0, mb = 0;
  std::size_t n_img = 0, n_mb = 0;
  std::vector<metrics::TokenSeq> all;
  for (const auto& [id, set] : sets) {
    div1 += metrics::div_n(set, 1);
    div2 += metrics::div_n(set, 2);
    ++n_img;
    if (set.size() >= 2) {
      mb += metrics::mbleu(set);
      ++n_mb;
    }
    all.insert(all.end(), set.begin(), set.end());
  }
  metrics::CorpusStats cs = metrics::corpus_stats(all, training);
  out << variant << "," << div1 / n_img << "," << div2 / n_img << ",";
  if (n_mb > 0)
    out << mb / n_mb;
  out << "," << cs.vocab_size << "," << cs.pct_novel << "\n";
}

int cmd_stats(const std::string& generated_path, const std::string& data,
              const std::string& out, std::size_t min_train_count) {
  Dataset ds = load_dataset(data);
  std::vector<GeneratedRow> rows = read_generated(generated_path);
  ensure_out_dir(out);

  std::vector<std::vector<std::string>> training = ds.training_corpus();

  std::map<long long, std::vector<metrics::TokenSeq>> full_sets, rank1_sets;
  std::vector<metrics::TokenSeq> all_tokens;
  std::vector<std::string> rank1_text;
  for (const GeneratedRow& r : rows) {
    metrics::TokenSeq toks = tokenize(r.caption);
    if (toks.empty()) throw DataError("empty generated caption for image " +
                                      std::to_string(r.image_id));
    full_sets[r.image_id].push_back(toks);
    all_tokens.push_back(toks);
    if (r.rank == 1) {
      rank1_sets[r.image_id].push_back(toks);
      rank1_text.push_back(join_tokens(toks));
    }
  }
  if (rank1_sets.empty())
    throw DataError("no rank-1 captions in " + generated_path);

  {
    std::ofstream rep(out + "/report.csv");
    rep << "variant,div1,div2,mbleu4,vocab,pct_novel\n";
    write_report_row(rep, "5 of 5", full_sets, training);
    write_report_row(rep, "1 of 5", rank1_sets, training);
    if (!rep) throw IoError("write failed for " + out + "/report.csv");
  }

  nlohmann::json plot;
  {
    metrics::CorpusStats cs = metrics::corpus_stats(all_tokens, training);
    nlohmann::json curve = nlohmann::json::object();
    for (const auto& [k, v] : cs.vocab_curve) curve[std::to_string(k)] = v;
    plot["vocab_curve"] = curve;
    plot["vocab_size"] = cs.vocab_size;
    plot["pct_novel"] = cs.pct_novel;
  }
  for (int n = 1; n <= 3; ++n) {
    metrics::CountRatioTable t =
        metrics::count_ratios(all_tokens, training, n, min_train_count);
    std::ofstream csv(out + "/count_ratio_" + std::to_string(n) + ".csv");
    csv << "ngram,n,train_count,test_count,expected,ratio\n";
    for (const auto& r : t.rows)
      csv << "\"" << r.ngram << "\"," << r.n << "," << r.train_count << ","
          << r.test_count << "," << r.expected << "," << r.ratio << "\n";
    if (!csv) throw IoError("write failed for count_ratio_" + std::to_string(n));
    nlohmann::json jn;
    jn["mean_ratio"] = t.mean_ratio;
    jn["bins"] = nlohmann::json::array();
    for (const auto& b : t.bins)
      jn["bins"].push_back({{"x", b.x}, {"mean", b.mean}, {"count", b.count}});
    jn["hist_edges"] = t.hist_edges;
    jn["hist_counts"] = t.hist_counts;
    plot["count_ratio"][std::to_string(n)] = jn;
  }
  {
    std::ofstream pj(out + "/plot_data.json");
    pj << plot.dump(2) << "\n";
    if (!pj) throw IoError("write failed for plot_data.json");
  }
  {
    std::ofstream rc(out + "/repeated_captions.csv");
    rc << "caption,count\n";
    for (const auto& [text, count] : metrics::repeated_caption_table(rank1_text))
      rc << "\"" << text << "\"," << count << "\n";
    if (!rc) throw IoError("write failed for repeated_captions.csv");
  }
  std::cout << "stats: report written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial caption-set generation and diversity evaluation"};
  app.require_subcommand(1);

  ConfigArgs cargs;
  std::uint64_t seed = 1;
  std::string out, data, split = "test", mode = "sample";
  std::string ckpt, gen_ckpt, disc_ckpt, generated;
  std::size_t beam_width = 5, p = 5, min_train_count = 5;

  auto* mk = app.add_subcommand("make-data", "Generate the toy dataset");
  add_config_options(mk, cargs);
  mk->add_option("--seed", seed, "Random seed");
  mk->add_option("--out", out, "Output dataset directory")->required();

  auto* pg = app.add_subcommand("pretrain-gen", "ML-pretrain the generator");
  add_config_options(pg, cargs);
  pg->add_option("--seed", seed, "Random seed");
  pg->add_option("--data", data, "Dataset directory")->required();
  pg->add_option("--out", out, "Output directory")->required();

  auto* pd = app.add_subcommand("pretrain-disc", "Warm up the discriminator");
  add_config_options(pd, cargs);
  pd->add_option("--seed", seed, "Random seed");
  pd->add_option("--data", data, "Dataset directory")->required();
  pd->add_option("--out", out, "Output directory")->required();

  auto* tg = app.add_subcommand("train-gan", "Adversarial training phase");
  add_config_options(tg, cargs);
  tg->add_option("--seed", seed, "Random seed");
  tg->add_option("--data", data, "Dataset directory")->required();
  tg->add_option("--gen", gen_ckpt, "Pretrained generator checkpoint")->required();
  tg->add_option("--disc", disc_ckpt, "Pretrained discriminator checkpoint")
      ->required();
  tg->add_option("--out", out, "Output directory")->required();

  auto* ge = app.add_subcommand("generate", "Decode captions from a checkpoint");
  ge->add_option("--ckpt", ckpt, "Generator checkpoint")->required();
  ge->add_option("--data", data, "Dataset directory")->required();
  ge->add_option("--split", split, "Dataset split (train|val|test)");
  ge->add_option("--mode", mode, "Decoding mode (sample|greedy|beam)");
  ge->add_option("--beam-width", beam_width, "Beam width for mode=beam");
  ge->add_option("--p", p, "Captions per image for mode=sample");
  ge->add_option("--seed", seed, "Random seed");
  ge->add_option("--out", out, "Output captions file (jsonl)")->required();

  auto* st = app.add_subcommand("stats", "Diversity statistics and plot data");
  st->add_option("--generated", generated, "Generated captions file")->required();
  st->add_option("--data", data, "Dataset directory")->required();
  st->add_option("--min-train-count", min_train_count,
                 "Minimum train count for count-ratio rows");
  st->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (mk->parsed()) return cmd_make_data(cargs, seed, out);
    if (pg->parsed()) return cmd_pretrain_gen(cargs, data, seed, out);
    if (pd->parsed()) return cmd_pretrain_disc(cargs, data, seed, out);
    if (tg->parsed())
      return cmd_train_gan(cargs, data, gen_ckpt, disc_ckpt, seed, out);
    if (ge->parsed())
      return cmd_generate(ckpt, data, split, mode, beam_width, p, seed, out);
    if (st->parsed()) return cmd_stats(generated, data, out, min_train_count);
  } catch (const ParamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    // DataError, IoError, IntegrityError and the base class
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
