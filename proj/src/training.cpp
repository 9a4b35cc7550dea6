#include "capgan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "capgan/error.hpp"
#include "capgan/losses.hpp"
#include "capgan/optimizer.hpp"

#include "json.hpp"

namespace capgan {

void TrainConfig::validate() const {
  if (set_size == 0) throw ParamError("train: set_size must be positive");
  if (batch_images < 2)
    throw ParamError("train: batch_images must be at least 2 for mismatched sets");
  if (pretrain_batch == 0) throw ParamError("train: pretrain_batch must be positive");
  if (!(pretrain_lr > 0.0) || !(disc_pretrain_lr > 0.0) || !(lr_d > 0.0) || !(lr_g > 0.0))
    throw ParamError("train: learning rates must be positive");
  if (!(pretrain_beta > 0.0)) throw ParamError("train: pretrain_beta must be positive");
  if (n_d == 0) throw ParamError("train: n_d must be positive");
  if (!(acc_gate > 0.5 && acc_gate < 1.0))
    throw ParamError("train: acc_gate must lie in (0.5, 1)");
  if (acc_probe_images == 0) throw ParamError("train: acc_probe_images must be positive");
  if (monitor_every == 0) throw ParamError("train: monitor_every must be positive");
}

TrainLog::TrainLog(std::string path, bool include_walltime)
    : path_(std::move(path)), include_walltime_(include_walltime) {
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw IoError("train log: cannot write " + path_);
}

void TrainLog::event(const std::string& phase, std::size_t step,
                     const std::vector<std::pair<std::string, double>>& fields) {
  if (path_.empty()) return;
  nlohmann::json j = {{"phase", phase}, {"step", step}};
  for (const auto& [k, v] : fields) j[k] = v;
  if (include_walltime_) {
    j["walltime"] =
        std::chrono::duration<double>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
  }
  std::ofstream out(path_, std::ios::app);
  out << j.dump() << "\n";
  if (!out) throw IoError("train log: write failed for " + path_);
}

CaptionSet reference_set(const DatasetItem& item, std::size_t p, std::size_t offset) {
  if (item.ref_ids.empty()) throw DataError("train: item without references");
  CaptionSet set;
  set.reserve(p);
  for (std::size_t i = 0; i < p; ++i)
    set.push_back(item.ref_ids[(offset + i) % item.ref_ids.size()]);
  return set;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.raw() % i]);
}

// Cycles through the split in shuffled epochs.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, Rng& rng) : rng_(rng), order_(n) {
    if (n == 0) throw ContractError("train: empty split");
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    shuffle_indices(order_, rng_);
  }
  std::vector<std::size_t> draw(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count) {
      if (pos_ == order_.size()) {
        shuffle_indices(order_, rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Rng& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

Tensor feature_rows(const DatasetSplit& split, const std::vector<std::size_t>& ids,
                    std::size_t repeat) {
  const std::size_t F = split.items[ids[0]].x_c.size();
  Tensor out({ids.size() * repeat, F});
  std::size_t r = 0;
  for (std::size_t id : ids)
    for (std::size_t k = 0; k < repeat; ++k, ++r)
      std::copy(split.items[id].x_c.data.begin(), split.items[id].x_c.data.end(),
                out.data.begin() + r * F);
  return out;
}

Tensor object_rows(const DatasetSplit& split, const std::vector<std::size_t>& ids,
                   std::size_t repeat) {
  const std::size_t K = split.items[ids[0]].x_o.size();
  Tensor out({ids.size() * repeat, K});
  std::size_t r = 0;
  for (std::size_t id : ids)
    for (std::size_t k = 0; k < repeat; ++k, ++r)
      std::copy(split.items[id].x_o.begin(), split.items[id].x_o.end(),
                out.data.begin() + r * K);
  return out;
}

template <typename Model, typename Staged>
void apply_step(Tape& tape, Model& model, const Staged& staged, Adam& opt,
                const std::string& prefix) {
  std::size_t i = 0;
  model.visit_params([&](const std::string& name, Tensor& t) {
    if (staged.list[i].first != name)
      throw ContractError("train: staged parameter order diverged at " + name);
    opt.step(prefix + name, t, tape.grad(staged.list[i].second));
    ++i;
  });
}

double finite_loss(const Tape& tape, Tape::Var loss, const char* phase) {
  double v = tape.val(loss).data[0];
  if (!std::isfinite(v))
    throw NumericError(std::string("train: non-finite loss in ") + phase);
  return v;
}

// the frozen player must stay gradient-free on every update
template <typename Staged>
void assert_isolated(const Tape& tape, const Staged& frozen, const char* phase) {
  for (const auto& [name, var] : frozen.list)
    if (tape.requires_grad(var))
      throw ContractError(std::string("train: gradient leaked into frozen player (") +
                          name + ") during " + phase);
}

// rows rotated one whole set forward: set b takes the captions of set b+1
std::vector<std::size_t> rotated_rows(std::size_t n_sets, std::size_t set_size) {
  std::vector<std::size_t> ids(n_sets * set_size);
  for (std::size_t b = 0; b < n_sets; ++b)
    for (std::size_t i = 0; i < set_size; ++i)
      ids[b * set_size + i] = ((b + 1) % n_sets) * set_size + i;
  return ids;
}

}  // namespace

double eval_ml_loss(const Generator& g, const DatasetSplit& split, double beta,
                    std::uint64_t noise_seed) {
  if (split.items.empty()) throw ContractError("train: empty evaluation split");
  Rng rng(noise_seed);
  std::vector<std::pair<const DatasetItem*, std::size_t>> pairs;
  for (const auto& item : split.items)
    for (std::size_t r = 0; r < item.ref_ids.size(); ++r) pairs.emplace_back(&item, r);
  const std::size_t chunk = 32;
  double total = 0.0;
  for (std::size_t lo = 0; lo < pairs.size(); lo += chunk) {
    std::size_t hi = std::min(lo + chunk, pairs.size());
    Generator::MlBatch batch;
    for (std::size_t i = lo; i < hi; ++i) {
      batch.x_c.push_back(&pairs[i].first->x_c);
      batch.x_o.push_back(&pairs[i].first->x_o);
      batch.reference.push_back(&pairs[i].first->ref_ids[pairs[i].second]);
    }
    Tape tape;
    auto staged = g.stage(tape, false);
    Tape::Var loss = g.ml_loss(tape, staged, batch, beta, rng);
    total += tape.val(loss).data[0] * static_cast<double>(hi - lo);
  }
  return total / static_cast<double>(pairs.size());
}

PretrainResult pretrain_generator(Generator& g, const Dataset& ds,
                                  const TrainConfig& cfg, std::uint64_t seed,
                                  TrainLog* log) {
  cfg.validate();
  Rng rng(seed);
  std::uint64_t val_noise_seed = rng.derive();
  AdamConfig ac;
  ac.lr = cfg.pretrain_lr;
  Adam opt(ac);

  std::vector<std::pair<const DatasetItem*, std::size_t>> pairs;
  for (const auto& item : ds.train.items)
    for (std::size_t r = 0; r < item.ref_ids.size(); ++r) pairs.emplace_back(&item, r);
  if (pairs.empty()) throw ContractError("train: no training references");

  PretrainResult res;
  std::vector<Tensor> best;
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.pretrain_epochs; ++epoch) {
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.pretrain_batch) {
      std::size_t hi = std::min(lo + cfg.pretrain_batch, order.size());
      Generator::MlBatch batch;
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& [item, r] = pairs[order[i]];
        batch.x_c.push_back(&item->x_c);
        batch.x_o.push_back(&item->x_o);
        batch.reference.push_back(&item->ref_ids[r]);
      }
      Tape tape;
      auto staged = g.stage(tape, true);
      Tape::Var loss = g.ml_loss(tape, staged, batch, cfg.pretrain_beta, rng);
      epoch_loss += finite_loss(tape, loss, "generator pretraining");
      ++batches;
      tape.backward(loss);
      apply_step(tape, g, staged, opt, "gen.");
    }
    res.final_train_loss = epoch_loss / static_cast<double>(batches);

    double val = eval_ml_loss(g, ds.val, cfg.pretrain_beta, val_noise_seed);
    if (log)
      log->event("pretrain_gen", epoch,
                 {{"train_loss", res.final_train_loss}, {"val_loss", val}});
    if (best.empty() || val < res.best_val_loss) {
      res.best_val_loss = val;
      res.best_epoch = epoch;
      best.clear();
      g.visit_params([&](const std::string&, const Tensor& t) { best.push_back(t); });
    }
  }
  if (cfg.pretrain_epochs == 0) {
    // no updates requested: leave the parameters untouched, report the
    // starting validation loss
    res.best_val_loss = eval_ml_loss(g, ds.val, cfg.pretrain_beta, val_noise_seed);
    return res;
  }
  std::size_t i = 0;
  g.visit_params([&](const std::string&, Tensor& t) { t = best[i++]; });
  return res;
}

namespace {

// matched-vs-mismatched accuracy of D on a slice of a split
double matched_accuracy(const Discriminator& d, const DatasetSplit& split,
                        const TrainConfig& cfg, Rng& rng) {
  BatchSampler sampler(split.items.size(), rng);
  std::vector<std::size_t> ids = sampler.draw(
      std::min<std::size_t>(cfg.acc_probe_images, split.items.size()));
  const std::size_t B = ids.size(), p = cfg.set_size;
  CaptionSet caps;
  for (std::size_t id : ids) {
    CaptionSet set = reference_set(split.items[id], p);
    caps.insert(caps.end(), set.begin(), set.end());
  }
  Tape tape;
  auto staged = d.stage(tape, false);
  Tape::Var fs = d.encode_captions(tape, staged, caps);
  Tape::Var fx = d.embed_images(tape, staged, tape.leaf(feature_rows(split, ids, 1)));
  Tape::Var p_match = d.discriminate(tape, staged, fs, fx, p).prob_real;
  Tape::Var fs_rot = tape.gather_rows(fs, rotated_rows(B, p));
  Tape::Var p_mis = d.discriminate(tape, staged, fs_rot, fx, p).prob_real;
  double correct = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (tape.val(p_match).at(b, 0) > 0.5) correct += 1.0;
    if (tape.val(p_mis).at(b, 0) <= 0.5) correct += 1.0;
  }
  return correct / static_cast<double>(2 * B);
}

}  // namespace

DiscPretrainResult pretrain_discriminator(Discriminator& d, const Dataset& ds,
                                          const TrainConfig& cfg, std::uint64_t seed,
                                          TrainLog* log) {
  cfg.validate();
  Rng rng(seed);
  AdamConfig ac;
  ac.lr = cfg.disc_pretrain_lr;
  Adam opt(ac);
  BatchSampler sampler(ds.train.items.size(), rng);

  DiscPretrainResult res;
  for (std::size_t step = 1; step <= cfg.disc_pretrain_steps; ++step) {
    std::vector<std::size_t> ids = sampler.draw(cfg.batch_images);
    const std::size_t B = ids.size(), p = cfg.set_size;
    CaptionSet caps;
    for (std::size_t id : ids) {
      CaptionSet set = reference_set(ds.train.items[id], p, step % 5);
      caps.insert(caps.end(), set.begin(), set.end());
    }
    Tape tape;
    auto staged = d.stage(tape, true);
    Tape::Var fs = d.encode_captions(tape, staged, caps);
    Tape::Var fx =
        d.embed_images(tape, staged, tape.leaf(feature_rows(ds.train, ids, 1)));
    Tape::Var p_match = d.discriminate(tape, staged, fs, fx, p).prob_real;
    Tape::Var fs_rot = tape.gather_rows(fs, rotated_rows(B, p));
    Tape::Var p_mis = d.discriminate(tape, staged, fs_rot, fx, p).prob_real;
    Tape::Var loss = tape.add(bce_real(tape, p_match), bce_fake(tape, p_mis));
    res.final_loss = finite_loss(tape, loss, "discriminator pretraining");
    tape.backward(loss);
    apply_step(tape, d, staged, opt, "disc.");
    if (log && step % cfg.monitor_every == 0)
      log->event("pretrain_disc", step, {{"loss", res.final_loss}});
  }
  Rng probe_rng(rng.derive());
  res.val_accuracy = matched_accuracy(d, ds.val, cfg, probe_rng);
  if (log) {
    log->event("pretrain_disc_done", cfg.disc_pretrain_steps,
               {{"val_accuracy", res.val_accuracy}});
    // chance-level accuracy after the budget is suspicious but not fatal
    if (res.val_accuracy <= 0.5)
      log->event("pretrain_disc_warning", cfg.disc_pretrain_steps,
                 {{"val_accuracy", res.val_accuracy}});
  }
  return res;
}

double probe_accuracy(const Generator& g, const Discriminator& d, const Dataset& ds,
                      const TrainConfig& cfg, Rng& rng) {
  const DatasetSplit& split = ds.val;
  BatchSampler sampler(split.items.size(), rng);
  std::vector<std::size_t> ids = sampler.draw(
      std::min<std::size_t>(cfg.acc_probe_images, split.items.size()));
  const std::size_t B = ids.size(), p = cfg.set_size;

  CaptionSet real;
  for (std::size_t id : ids) {
    CaptionSet set = reference_set(split.items[id], p);
    real.insert(real.end(), set.begin(), set.end());
  }
  Tape tape;
  auto gs = g.stage(tape, false);
  auto dsg = d.stage(tape, false);
  auto unrolled = g.unroll_gumbel(tape, gs, feature_rows(split, ids, p),
                                  object_rows(split, ids, p), rng);
  Tape::Var fx = d.embed_images(tape, dsg, tape.leaf(feature_rows(split, ids, 1)));
  Tape::Var f_real = d.encode_captions(tape, dsg, real);
  Tape::Var f_gen =
      d.encode_steps(tape, dsg, unrolled.step_outputs, unrolled.step_alive);
  Tape::Var f_mis = tape.gather_rows(f_real, rotated_rows(B, p));
  Tape::Var p_real = d.discriminate(tape, dsg, f_real, fx, p).prob_real;
  Tape::Var p_gen = d.discriminate(tape, dsg, f_gen, fx, p).prob_real;
  Tape::Var p_mis = d.discriminate(tape, dsg, f_mis, fx, p).prob_real;
  double correct = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (tape.val(p_real).at(b, 0) > 0.5) correct += 1.0;
    if (tape.val(p_gen).at(b, 0) <= 0.5) correct += 1.0;
    if (tape.val(p_mis).at(b, 0) <= 0.5) correct += 1.0;
  }
  return correct / static_cast<double>(3 * B);
}

GanResult gan_train(Generator& g, Discriminator& d, const Dataset& ds,
                    const TrainConfig& cfg, std::uint64_t seed, TrainLog* log) {
  cfg.validate();
  Rng rng(seed);
  AdamConfig dc, gc;
  dc.lr = cfg.lr_d;
  gc.lr = cfg.lr_g;
  Adam opt_d(dc), opt_g(gc);
  BatchSampler sampler(ds.train.items.size(), rng);

  GanResult res;
  const std::size_t p = cfg.set_size;
  std::size_t updates = 0;

  auto d_update = [&](const char* phase) {
    std::vector<std::size_t> ids = sampler.draw(cfg.batch_images);
    const std::size_t B = ids.size();
    CaptionSet real;
    for (std::size_t id : ids) {
      CaptionSet set = reference_set(ds.train.items[id], p, updates % 5);
      real.insert(real.end(), set.begin(), set.end());
    }
    Tape tape;
    auto dstage = d.stage(tape, true);
    auto gstage = g.stage(tape, false);
    auto unrolled = g.unroll_gumbel(tape, gstage, feature_rows(ds.train, ids, p),
                                    object_rows(ds.train, ids, p), rng);
    Tape::Var fx =
        d.embed_images(tape, dstage, tape.leaf(feature_rows(ds.train, ids, 1)));
    Tape::Var f_real = d.encode_captions(tape, dstage, real);
    Tape::Var f_gen =
        d.encode_steps(tape, dstage, unrolled.step_outputs, unrolled.step_alive);
    Tape::Var f_mis = tape.gather_rows(f_real, rotated_rows(B, p));
    Tape::Var p_real = d.discriminate(tape, dstage, f_real, fx, p).prob_real;
    Tape::Var p_gen = d.discriminate(tape, dstage, f_gen, fx, p).prob_real;
    Tape::Var p_mis = d.discriminate(tape, dstage, f_mis, fx, p).prob_real;
    Tape::Var loss = discriminator_loss(tape, p_real, p_gen, p_mis);
    res.final_d_loss = finite_loss(tape, loss, phase);
    tape.backward(loss);
    assert_isolated(tape, gstage, phase);
    apply_step(tape, d, dstage, opt_d, "disc.");
    ++updates;
  };

  auto g_update = [&] {
    std::vector<std::size_t> ids = sampler.draw(cfg.batch_images);
    CaptionSet real;
    for (std::size_t id : ids) {
      CaptionSet set = reference_set(ds.train.items[id], p, updates % 5);
      real.insert(real.end(), set.begin(), set.end());
    }
    Tape tape;
    auto gstage = g.stage(tape, true);
    auto dstage = d.stage(tape, false);
    auto unrolled = g.unroll_gumbel(tape, gstage, feature_rows(ds.train, ids, p),
                                    object_rows(ds.train, ids, p), rng);
    Tape::Var fx =
        d.embed_images(tape, dstage, tape.leaf(feature_rows(ds.train, ids, 1)));
    Tape::Var f_gen =
        d.encode_steps(tape, dstage, unrolled.step_outputs, unrolled.step_alive);
    auto out_gen = d.discriminate(tape, dstage, f_gen, fx, p);
    Tape::Var feat_real = out_gen.features;  // placeholder when FM is off
    if (cfg.feature_matching) {
      Tape::Var f_real = d.encode_captions(tape, dstage, real);
      feat_real = d.distance_features(tape, dstage, f_real, fx, p);
    }
    Tape::Var loss =
        generator_loss(tape, out_gen.prob_real, out_gen.features, feat_real,
                       d.config().n_views, cfg.feature_matching);
    res.final_g_loss = finite_loss(tape, loss, "adversarial G step");
    tape.backward(loss);
    assert_isolated(tape, dstage, "adversarial G step");
    apply_step(tape, g, gstage, opt_g, "gen.");
    ++updates;
    ++res.g_steps;
  };

  auto probe = [&] {
    Rng probe_rng(rng.derive());
    res.final_probe_accuracy = probe_accuracy(g, d, ds, cfg, probe_rng);
    return res.final_probe_accuracy;
  };
  auto monitor = [&](const char* phase) {
    if (log && updates % cfg.monitor_every == 0) {
      probe();
      log->event(phase, updates,
                 {{"d_loss", res.final_d_loss},
                  {"g_loss", res.final_g_loss},
                  {"probe_accuracy", res.final_probe_accuracy},
                  {"gate_activations", static_cast<double>(res.gate_activations)}});
    }
  };

  double acc = probe();
  if (log)
    log->event("gan_start", 0, {{"probe_accuracy", acc}});

  for (std::size_t gstep = 1; gstep <= cfg.gan_g_steps; ++gstep) {
    for (std::size_t k = 0; k < cfg.n_d; ++k) {
      d_update("adversarial D step");
      ++res.d_steps;
      monitor("gan");
    }
    // the gate: no generator update while D sits below the accuracy floor
    acc = probe();
    if (acc < cfg.acc_gate) {
      ++res.gate_activations;
      double pre = acc;
      std::size_t recovery = 0;
      while (acc < cfg.acc_gate) {
        if (recovery >= cfg.max_recovery_steps) {
          if (log)
            log->event("gate_abort", updates,
                       {{"pre_accuracy", pre}, {"accuracy", acc},
                        {"recovery_steps", static_cast<double>(recovery)}});
          throw NumericError(
              "train: discriminator accuracy failed to recover above the gate "
              "within max_recovery_steps");
        }
        d_update("gate recovery D step");
        ++recovery;
        ++res.recovery_d_steps;
        acc = probe();
      }
      if (log)
        log->event("gate", updates,
                   {{"pre_accuracy", pre},
                    {"post_accuracy", acc},
                    {"recovery_steps", static_cast<double>(recovery)}});
    }
    g_update();
    monitor("gan");
  }
  if (log)
    log->event("gan_done", updates,
               {{"d_loss", res.final_d_loss},
                {"g_loss", res.final_g_loss},
                {"probe_accuracy", res.final_probe_accuracy},
                {"gate_activations", static_cast<double>(res.gate_activations)},
                {"recovery_d_steps", static_cast<double>(res.recovery_d_steps)}});
  return res;
}

}  // namespace capgan
