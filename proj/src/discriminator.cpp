#include "capgan/discriminator.hpp"

#include <algorithm>

#include "capgan/error.hpp"
#include "capgan/rng.hpp"

namespace capgan {

void DiscriminatorConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kReserved))
    throw ParamError("discriminator: vocab_size must exceed the reserved ids");
  if (embed_dim == 0 || hidden_dim == 0 || feature_dim == 0)
    throw ParamError("discriminator: dimensions must be positive");
  if (n_dist == 0 || n_views == 0)
    throw ParamError("discriminator: n_dist and n_views must be positive");
}

Tape::Var Discriminator::Staged::at(const std::string& name) const {
  for (const auto& [n, v] : list)
    if (n == name) return v;
  throw ContractError("discriminator: unknown staged parameter " + name);
}

Discriminator::Discriminator(DiscriminatorConfig config, std::uint64_t init_seed)
    : cfg_(config) {
  cfg_.validate();
  const std::size_t V = cfg_.vocab_size, E = cfg_.embed_dim, M = cfg_.hidden_dim;
  const std::size_t NO = cfg_.n_dist * cfg_.n_views;
  Rng rng(init_seed);
  auto add = [&](const std::string& name, std::vector<std::size_t> shape) -> Tensor& {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-0.08, 0.08);
    params_.emplace_back(name, std::move(t));
    return params_.back().second;
  };
  add("embed", {V, E});
  add("lstm.w", {E + M, 4 * M});
  Tensor& b = add("lstm.b", {4 * M});
  for (std::size_t j = M; j < 2 * M; ++j) b.data[j] = 1.0;  // forget gate
  add("img.w", {cfg_.feature_dim, M});
  add("img.b", {M});
  add("ts.w", {M, NO});
  add("tx.w", {M, NO});
  add("out.w", {2 * cfg_.n_views, 2});
  add("out.b", {2});
}

void Discriminator::visit_params(
    const std::function<void(const std::string&, Tensor&)>& fn) {
  for (auto& [n, t] : params_) fn(n, t);
}

void Discriminator::visit_params(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  for (const auto& [n, t] : params_) fn(n, t);
}

Discriminator::Staged Discriminator::stage(Tape& tape, bool requires_grad) const {
  Staged s;
  for (const auto& [n, t] : params_) s.list.emplace_back(n, tape.leaf(t, requires_grad));
  return s;
}

Tape::Var Discriminator::encode_rows(Tape& tape, const Staged& p,
                                     const std::vector<Tape::Var>& inputs,
                                     const std::vector<Tensor>& step_alive) const {
  if (inputs.empty()) throw ContractError("discriminator: nothing to encode");
  if (inputs.size() != step_alive.size())
    throw ContractError("discriminator: step and mask counts differ");
  const std::size_t M = cfg_.hidden_dim;
  const std::size_t R = tape.val(inputs[0]).rows();
  Tape::Var h = tape.leaf(Tensor({R, M}));
  Tape::Var c = tape.leaf(Tensor({R, M}));
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (step_alive[t].size() != R)
      throw ShapeError("discriminator: mask length does not match the batch");
    Tape::Var pre = tape.add_rowvec(
        tape.matmul(tape.concat_cols({inputs[t], h}), p.at("lstm.w")), p.at("lstm.b"));
    Tape::Var i = tape.sigmoid_(tape.slice_cols(pre, 0, M));
    Tape::Var f = tape.sigmoid_(tape.slice_cols(pre, M, 2 * M));
    Tape::Var g = tape.tanh_(tape.slice_cols(pre, 2 * M, 3 * M));
    Tape::Var o = tape.sigmoid_(tape.slice_cols(pre, 3 * M, 4 * M));
    Tape::Var c_new = tape.add(tape.mul(f, c), tape.mul(i, g));
    Tape::Var h_new = tape.mul(o, tape.tanh_(c_new));
    // finished rows keep their state
    Tensor keep({R});
    for (std::size_t r = 0; r < R; ++r) keep.data[r] = 1.0 - step_alive[t].data[r];
    c = tape.add(tape.scale_rows_const(c_new, step_alive[t]), tape.scale_rows_const(c, keep));
    h = tape.add(tape.scale_rows_const(h_new, step_alive[t]), tape.scale_rows_const(h, keep));
  }
  return h;
}

Tape::Var Discriminator::encode_captions(Tape& tape, const Staged& p,
                                         const CaptionSet& caps) const {
  const std::size_t R = caps.size();
  if (R == 0) throw ContractError("discriminator: empty caption set");
  std::size_t T = 0;
  for (const Caption& cap : caps) {
    for (int id : cap.ids)
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
        throw DataError("discriminator: token id outside vocabulary");
    T = std::max(T, cap.ids.size() + 1);  // +1 for END
  }
  std::vector<Tape::Var> inputs;
  std::vector<Tensor> masks;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<std::size_t> ids(R, static_cast<std::size_t>(Vocabulary::kPad));
    Tensor mask({R});
    for (std::size_t r = 0; r < R; ++r) {
      const auto& s = caps[r].ids;
      if (t < s.size()) {
        ids[r] = static_cast<std::size_t>(s[t]);
        mask.data[r] = 1.0;
      } else if (t == s.size()) {
        ids[r] = static_cast<std::size_t>(Vocabulary::kEnd);
        mask.data[r] = 1.0;
      }
    }
    inputs.push_back(tape.gather_rows(p.at("embed"), ids));
    masks.push_back(std::move(mask));
  }
  return encode_rows(tape, p, inputs, masks);
}

Tape::Var Discriminator::encode_steps(Tape& tape, const Staged& p,
                                      const std::vector<Tape::Var>& steps,
                                      const std::vector<Tensor>& step_alive) const {
  std::vector<Tape::Var> inputs;
  inputs.reserve(steps.size());
  for (Tape::Var s : steps) {
    if (tape.val(s).cols() != cfg_.vocab_size)
      throw ShapeError("discriminator: step width does not match the vocabulary");
    inputs.push_back(tape.matmul(s, p.at("embed")));
  }
  return encode_rows(tape, p, inputs, step_alive);
}

Tape::Var Discriminator::embed_images(Tape& tape, const Staged& p,
                                      Tape::Var x_c_rows) const {
  if (tape.val(x_c_rows).cols() != cfg_.feature_dim)
    throw ShapeError("discriminator: image feature width does not match the config");
  return tape.tanh_(tape.affine(x_c_rows, p.at("img.w"), p.at("img.b")));
}

Tape::Var Discriminator::distance_features(Tape& tape, const Staged& p,
                                           Tape::Var sentence_codes,
                                           Tape::Var image_codes,
                                           std::size_t set_size) const {
  const std::size_t R = tape.val(sentence_codes).rows();
  const std::size_t O = cfg_.n_views, N = cfg_.n_dist;
  if (set_size == 0 || R % set_size != 0)
    throw ShapeError("discriminator: row count is not a multiple of the set size");
  const std::size_t B = R / set_size;
  if (tape.val(image_codes).rows() != B)
    throw ShapeError("discriminator: one image code per set is required");

  Tape::Var K = tape.matmul(sentence_codes, p.at("ts.w"));   // [R x N*O]
  Tape::Var Kx = tape.matmul(image_codes, p.at("tx.w"));     // [B x N*O]

  // within-set proximity sums; the self term exp(0) = 1 enters as a constant
  std::vector<Tape::Var> dist_s(R), dist_x(R);
  Tensor ones({1, O}, 1.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<Tape::Var> krow(set_size);
    for (std::size_t i = 0; i < set_size; ++i) krow[i] = tape.row(K, b * set_size + i);
    for (std::size_t i = 0; i < set_size; ++i) {
      Tape::Var acc{};
      for (std::size_t j = 0; j < set_size; ++j) {
        if (j == i) continue;
        Tape::Var c = tape.exp_(tape.scale(
            tape.sum_blocks(tape.abs_(tape.sub(krow[i], krow[j])), N), -1.0));
        acc = acc.valid() ? tape.add(acc, c) : c;
      }
      Tape::Var with_self =
          acc.valid() ? tape.add_const(acc, ones) : tape.leaf(ones);
      dist_s[b * set_size + i] = with_self;
      dist_x[b * set_size + i] = tape.exp_(tape.scale(
          tape.sum_blocks(tape.abs_(tape.sub(krow[i], tape.row(Kx, b))), N), -1.0));
    }
  }
  std::vector<Tape::Var> rows(R);
  for (std::size_t r = 0; r < R; ++r)
    rows[r] = tape.concat_cols({dist_s[r], dist_x[r]});
  return tape.stack_rows(rows);
}

Discriminator::Output Discriminator::discriminate(Tape& tape, const Staged& p,
                                                  Tape::Var sentence_codes,
                                                  Tape::Var image_codes,
                                                  std::size_t set_size) const {
  Output out;
  out.features = distance_features(tape, p, sentence_codes, image_codes, set_size);
  const std::size_t R = tape.val(out.features).rows();
  const std::size_t B = R / set_size;
  std::vector<Tape::Var> pooled(B);
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::size_t> ids(set_size);
    for (std::size_t i = 0; i < set_size; ++i) ids[i] = b * set_size + i;
    pooled[b] = tape.mean_rows(tape.gather_rows(out.features, ids));
  }
  Tape::Var logits =
      tape.affine(tape.stack_rows(pooled), p.at("out.w"), p.at("out.b"));
  Tape::Var probs = tape.scaled_softmax(logits, 1.0);
  out.prob_real = tape.slice_cols(probs, 0, 1);
  return out;
}

}  // namespace capgan
