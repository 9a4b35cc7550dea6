#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "capgan/tape.hpp"
#include "capgan/tensor.hpp"
#include "capgan/vocab.hpp"

namespace capgan {

struct DiscriminatorConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 64;  // sentence code dimension
  std::size_t n_dist = 8;       // distance-space dimension per view
  std::size_t n_views = 4;      // independent distance views
  std::size_t feature_dim = 32;

  void validate() const;
};

// Set-level discriminator. Sentences are LSTM-encoded, projected into
// `n_views` distance spaces, and each sentence is scored by its summed
// exponentiated-L1 proximity to the other members of its set and to the
// image code. Mean-pooling the per-sentence features makes the whole thing
// permutation-invariant by construction.
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig config, std::uint64_t init_seed);

  const DiscriminatorConfig& config() const { return cfg_; }

  void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);
  void visit_params(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  struct Staged {
    std::vector<std::pair<std::string, Tape::Var>> list;
    Tape::Var at(const std::string& name) const;
  };
  Staged stage(Tape& tape, bool requires_grad) const;

  // Real sentences by token id -> codes [R x hidden]. The END sentinel is
  // appended to every sentence before encoding.
  Tape::Var encode_captions(Tape& tape, const Staged& p, const CaptionSet& caps) const;

  // Generator output: per-step rows over the vocabulary (hard forward, soft
  // backward) plus the per-step alive masks. Encoder state freezes once a
  // row's mask drops to zero.
  Tape::Var encode_steps(Tape& tape, const Staged& p,
                         const std::vector<Tape::Var>& steps,
                         const std::vector<Tensor>& step_alive) const;

  // Image features [B x feature_dim] -> codes [B x hidden].
  Tape::Var embed_images(Tape& tape, const Staged& p, Tape::Var x_c_rows) const;

  // Per-sentence feature rows [R x 2*n_views]: the first n_views columns are
  // the within-set distance sums (self term included), the last n_views the
  // proximities to the image code. Rows are grouped into sets of `set_size`.
  Tape::Var distance_features(Tape& tape, const Staged& p, Tape::Var sentence_codes,
                              Tape::Var image_codes, std::size_t set_size) const;

  struct Output {
    Tape::Var prob_real;  // [B x 1]
    Tape::Var features;   // [R x 2*n_views], pre-pooling
  };
  Output discriminate(Tape& tape, const Staged& p, Tape::Var sentence_codes,
                      Tape::Var image_codes, std::size_t set_size) const;

 private:
  DiscriminatorConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;

  Tape::Var encode_rows(Tape& tape, const Staged& p,
                        const std::vector<Tape::Var>& inputs,
                        const std::vector<Tensor>& step_alive) const;
};

}  // namespace capgan
