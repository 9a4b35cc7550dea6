#pragma once

#include "capgan/tape.hpp"

namespace capgan {

// probabilities are clamped into [kProbEps, 1 - kProbEps] before any log
inline constexpr double kProbEps = 1e-7;

// mean(-log d) over a [B x 1] column of probabilities
Tape::Var bce_real(Tape& tape, Tape::Var d);
// mean(-log(1 - d))
Tape::Var bce_fake(Tape& tape, Tape::Var d);

// Binary set-discrimination objective: reference sets scored real, generated
// sets and mismatched (caption set from another image) sets scored fake.
Tape::Var discriminator_loss(Tape& tape, Tape::Var d_real, Tape::Var d_gen,
                             Tape::Var d_mismatch);

// || E[gen features] - E[real features] ||_2, taken separately over the
// within-set block (first n_views columns) and the image block (rest), then
// summed. Zero gap contributes zero gradient (sqrt subgradient at 0).
Tape::Var feature_matching_term(Tape& tape, Tape::Var feat_gen, Tape::Var feat_real,
                                std::size_t n_views);

// mean(-log D(gen)) plus, when enabled, the feature-matching term.
Tape::Var generator_loss(Tape& tape, Tape::Var d_gen, Tape::Var feat_gen,
                         Tape::Var feat_real, std::size_t n_views,
                         bool feature_matching);

}  // namespace capgan
