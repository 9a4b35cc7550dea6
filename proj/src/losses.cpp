#include "capgan/losses.hpp"

#include "capgan/error.hpp"

namespace capgan {

namespace {

void check_prob_column(Tape& tape, Tape::Var d, const char* what) {
  const Tensor& v = tape.val(d);
  if (v.cols() != 1) throw ShapeError(std::string(what) + ": expected a [B x 1] column");
  if (v.rows() == 0) throw ContractError(std::string(what) + ": empty batch");
}

Tape::Var mean_neg_log(Tape& tape, Tape::Var probs) {
  Tape::Var clamped = tape.clamp_(probs, kProbEps, 1.0 - kProbEps);
  return tape.scale(tape.mean_all(tape.log_clamped(clamped)), -1.0);
}

}  // namespace

Tape::Var bce_real(Tape& tape, Tape::Var d) {
  check_prob_column(tape, d, "bce_real");
  return mean_neg_log(tape, d);
}

Tape::Var bce_fake(Tape& tape, Tape::Var d) {
  check_prob_column(tape, d, "bce_fake");
  Tensor ones({tape.val(d).rows(), 1}, 1.0);
  return mean_neg_log(tape, tape.add_const(tape.scale(d, -1.0), ones));
}

Tape::Var discriminator_loss(Tape& tape, Tape::Var d_real, Tape::Var d_gen,
                             Tape::Var d_mismatch) {
  return tape.add(tape.add(bce_real(tape, d_real), bce_fake(tape, d_gen)),
                  bce_fake(tape, d_mismatch));
}

Tape::Var feature_matching_term(Tape& tape, Tape::Var feat_gen, Tape::Var feat_real,
                                std::size_t n_views) {
  const Tensor& g = tape.val(feat_gen);
  const Tensor& r = tape.val(feat_real);
  if (g.cols() != 2 * n_views || r.cols() != 2 * n_views)
    throw ShapeError("feature_matching: feature width must be 2 * n_views");
  Tape::Var gap = tape.sub(tape.mean_rows(feat_gen), tape.mean_rows(feat_real));
  auto block_norm = [&](std::size_t lo, std::size_t hi) {
    Tape::Var part = tape.slice_cols(gap, lo, hi);
    return tape.sqrt_(tape.sum_all(tape.mul(part, part)));
  };
  return tape.add(block_norm(0, n_views), block_norm(n_views, 2 * n_views));
}

Tape::Var generator_loss(Tape& tape, Tape::Var d_gen, Tape::Var feat_gen,
                         Tape::Var feat_real, std::size_t n_views,
                         bool feature_matching) {
  Tape::Var loss = bce_real(tape, d_gen);  // drive D(gen) toward 1
  if (feature_matching)
    loss = tape.add(loss, feature_matching_term(tape, feat_gen, feat_real, n_views));
  return loss;
}

}  // namespace capgan
