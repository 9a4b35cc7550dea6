#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "capgan/rng.hpp"
#include "capgan/tape.hpp"
#include "capgan/tensor.hpp"
#include "capgan/vocab.hpp"

namespace capgan {

struct GeneratorConfig {
  std::size_t vocab_size = 0;   // includes reserved ids
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 3;
  double beta = 3.0;            // softmax peakiness
  double tau = 0.5;             // Gumbel temperature
  std::size_t noise_dim = 8;
  std::size_t feature_dim = 32;
  std::size_t max_len = 16;

  void validate(bool allow_tau_override = false) const;
};

// Categorical sample via the Gumbel-Max trick plus its softmax relaxation.
// `hard` is the one-hot argmax(g + log theta); `soft` is
// softmax((g + log theta) / tau). Both share the same noise draw.
struct GumbelSample {
  Tensor hard;
  Tensor soft;
  Tensor gumbel_noise;
};

GumbelSample gumbel_softmax_sample(const Tensor& theta, double tau, Rng& rng);

enum class DecodeMode { Sample, Greedy, Beam };

struct Generated {
  Caption caption;
  double log_prob = 0.0;  // total (summed) log probability at the configured beta
};

// Conditional caption generator: residual multi-layer LSTM over word
// embeddings, conditioned on the image feature at every step and on the
// object feature at step 0 (through the shared embedding matrix), with a
// per-caption uniform noise vector injected at every step.
class Generator {
 public:
  Generator(GeneratorConfig config, std::vector<int> object_ids, std::uint64_t init_seed);

  const GeneratorConfig& config() const { return cfg_; }
  const std::vector<int>& object_ids() const { return object_ids_; }

  void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit_params(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  struct Staged {
    std::vector<std::pair<std::string, Tape::Var>> list;
    Tape::Var at(const std::string& name) const;
  };
  Staged stage(Tape& tape, bool requires_grad) const;

  struct State {
    std::vector<Tape::Var> h, c;  // per layer, [B x H]
    std::size_t t = 0;
  };
  State initial_state(Tape& tape, std::size_t batch) const;

  // One decoder step: returns pre-softmax logits [B x V] and advances state.
  // Layers >= 2 see the residual sum of the layers below; x_c and z enter
  // layer 1 through their own input matrices at every step.
  Tape::Var lstm_step(Tape& tape, const Staged& p, Tape::Var input_embed,
                      Tape::Var x_c, Tape::Var z, State& state) const;

  // x_o rows [B x |objects|] -> [B x E] through the object rows of the
  // word-embedding matrix.
  Tape::Var embed_objects(Tape& tape, const Staged& p, Tape::Var x_o_rows) const;

  struct MlBatch {
    // parallel arrays, one entry per training sample
    std::vector<const Tensor*> x_c;
    std::vector<const std::vector<double>*> x_o;
    std::vector<const Caption*> reference;
  };
  // Teacher-forced mean per-token negative log likelihood, averaged over the
  // batch. END is a predicted token; noise z is drawn per caption.
  Tape::Var ml_loss(Tape& tape, const Staged& p, const MlBatch& batch, double beta,
                    Rng& rng) const;

  // Straight-through Gumbel unroll for adversarial training. Rows are
  // (image, set-member) pairs. Tokens after END are PAD one-hots and masked.
  struct Unrolled {
    std::vector<Tape::Var> step_outputs;  // per t: [R x V], hard forward / soft backward
    std::vector<Tensor> step_alive;       // per t: [R] 1.0 while the row is emitting
    std::vector<Caption> captions;        // sampled content tokens per row
  };
  Unrolled unroll_gumbel(Tape& tape, const Staged& p, const Tensor& x_c_rows,
                         const Tensor& x_o_rows, Rng& rng) const;

  // Frozen-model decoding (no gradients).
  Generated generate_caption(const Tensor& x_c, const std::vector<double>& x_o,
                             DecodeMode mode, std::size_t beam_width, Rng& rng,
                             std::size_t max_len) const;
  std::vector<Generated> generate_set(const Tensor& x_c, const std::vector<double>& x_o,
                                      std::size_t p, Rng& rng) const;
  std::vector<Generated> beam_search(const Tensor& x_c, const std::vector<double>& x_o,
                                     std::size_t width, std::size_t max_len) const;

 private:
  GeneratorConfig cfg_;
  std::vector<int> object_ids_;
  std::vector<std::pair<std::string, Tensor>> params_;

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  struct PlainState {
    std::vector<Tensor> h, c;
  };
  PlainState plain_state(std::size_t rows) const;
  // Scratch-tape step for decoding; returns logits [R x V].
  Tensor step_plain(const Tensor& input_embed, const Tensor& x_c_rows,
                    const Tensor& z_rows, PlainState& state) const;
  Tensor object_embed_plain(const Tensor& x_o_rows) const;
};

}  // namespace capgan
