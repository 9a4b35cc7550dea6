#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capgan/dataset.hpp"
#include "capgan/discriminator.hpp"
#include "capgan/generator.hpp"
#include "capgan/rng.hpp"

namespace capgan {

struct TrainConfig {
  std::size_t set_size = 5;           // captions per set
  std::size_t batch_images = 8;       // images per adversarial step
  std::size_t pretrain_batch = 16;    // (image, reference) pairs per ML step
  std::size_t pretrain_epochs = 8;
  double pretrain_lr = 1e-3;
  double pretrain_beta = 1.0;         // softmax peakiness during ML training
  std::size_t disc_pretrain_steps = 800;
  double disc_pretrain_lr = 1e-3;

  std::size_t gan_g_steps = 800;      // generator updates
  std::size_t n_d = 5;                // discriminator updates per generator update
  double lr_d = 2e-4;
  double lr_g = 1e-4;
  double acc_gate = 0.75;             // D accuracy floor; G pauses below it
  std::size_t acc_probe_images = 12;  // held-out images per accuracy probe
  std::size_t max_recovery_steps = 4000;  // extra D steps allowed per gate activation
  std::size_t monitor_every = 25;     // updates between accuracy probes
  bool feature_matching = true;

  void validate() const;
};

// JSONL event stream. Wall-clock time is only recorded when opted in, so
// default logs are byte-identical across reruns of the same seed.
class TrainLog {
 public:
  TrainLog() = default;
  TrainLog(std::string path, bool include_walltime);
  void event(const std::string& phase, std::size_t step,
             const std::vector<std::pair<std::string, double>>& fields);
  bool enabled() const { return !path_.empty(); }

 private:
  std::string path_;
  bool include_walltime_ = false;
};

struct PretrainResult {
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  double final_train_loss = 0.0;
};

// Teacher-forced ML training; the parameters left in `g` are those of the
// best validation epoch.
PretrainResult pretrain_generator(Generator& g, const Dataset& ds,
                                  const TrainConfig& cfg, std::uint64_t seed,
                                  TrainLog* log = nullptr);

struct DiscPretrainResult {
  double final_loss = 0.0;
  double val_accuracy = 0.0;  // matched vs mismatched sets
};

// Warms the discriminator on matched reference sets against mismatched ones
// (references rotated to another image in the batch).
DiscPretrainResult pretrain_discriminator(Discriminator& d, const Dataset& ds,
                                          const TrainConfig& cfg, std::uint64_t seed,
                                          TrainLog* log = nullptr);

struct GanResult {
  std::size_t g_steps = 0;
  std::size_t d_steps = 0;           // scheduled n_d updates
  std::size_t recovery_d_steps = 0;  // extra updates taken below the gate
  std::size_t gate_activations = 0;
  double final_probe_accuracy = 0.0;
  double final_d_loss = 0.0;
  double final_g_loss = 0.0;
};

// Adversarial phase: n_d discriminator updates, then one generator update —
// but never while the latest probe accuracy sits below acc_gate. Below the
// gate the discriminator trains alone until it recovers; exceeding
// max_recovery_steps aborts.
GanResult gan_train(Generator& g, Discriminator& d, const Dataset& ds,
                    const TrainConfig& cfg, std::uint64_t seed,
                    TrainLog* log = nullptr);

// Held-out accuracy of D at threshold 1/2 over real, generated and
// mismatched sets (one batch; real counted correct above 1/2, the others at
// or below it).
double probe_accuracy(const Generator& g, const Discriminator& d, const Dataset& ds,
                      const TrainConfig& cfg, Rng& rng);

// Mean teacher-forced loss over a split (no updates); fixed noise seed so
// successive evaluations are comparable.
double eval_ml_loss(const Generator& g, const DatasetSplit& split, double beta,
                    std::uint64_t noise_seed);

// p references of an item, cycling when the set is larger than the pool.
CaptionSet reference_set(const DatasetItem& item, std::size_t p, std::size_t offset = 0);

}  // namespace capgan
