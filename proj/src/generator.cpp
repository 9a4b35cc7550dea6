#include "capgan/generator.hpp"

#include <algorithm>
#include <cmath>

#include "capgan/error.hpp"

namespace capgan {

namespace {

// softmax(beta * row) with max subtraction, plain math (decoding path)
void softmax_row(const double* logits, double beta, std::size_t n, double* out) {
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(beta * (logits[i] - mx));
    sum += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

Tensor repeat_row(const Tensor& v, std::size_t rows) {
  Tensor out({rows, v.size()});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < v.size(); ++j) out.data[r * v.size() + j] = v.data[j];
  return out;
}

}  // namespace

void GeneratorConfig::validate(bool allow_tau_override) const {
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kReserved))
    throw ParamError("generator: vocab_size must exceed the reserved ids");
  if (embed_dim == 0 || hidden_dim == 0 || num_layers == 0)
    throw ParamError("generator: embed_dim, hidden_dim and num_layers must be positive");
  if (feature_dim == 0 || noise_dim == 0)
    throw ParamError("generator: feature_dim and noise_dim must be positive");
  if (!(beta > 0.0)) throw ParamError("generator: beta must be positive");
  if (allow_tau_override) {
    if (!(tau > 0.0)) throw ParamError("generator: tau must be positive");
  } else if (!(tau > 0.1 && tau <= 0.8)) {
    throw ParamError("generator: tau must lie in (0.1, 0.8]");
  }
  if (max_len < 2) throw ParamError("generator: max_len must be at least 2");
}

GumbelSample gumbel_softmax_sample(const Tensor& theta, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw ParamError("gumbel_softmax_sample: tau must be positive");
  std::size_t n = theta.size();
  if (n == 0) throw ShapeError("gumbel_softmax_sample: empty distribution");
  double sum = 0.0;
  for (double p : theta.data) {
    if (p < 0.0) throw ParamError("gumbel_softmax_sample: negative probability");
    sum += p;
  }
  if (std::fabs(sum - 1.0) > 1e-6)
    throw ParamError("gumbel_softmax_sample: probabilities must sum to 1");

  GumbelSample s;
  s.gumbel_noise = Tensor({n});
  for (std::size_t i = 0; i < n; ++i) s.gumbel_noise.data[i] = rng.gumbel();

  // zero-probability entries are excluded entirely
  std::size_t best = n;
  double best_a = 0.0, mx = 0.0;
  std::vector<double> a(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (theta.data[i] <= 0.0) continue;
    a[i] = s.gumbel_noise.data[i] + std::log(theta.data[i]);
    if (best == n || a[i] > best_a) {
      best = i;
      best_a = a[i];
    }
  }
  mx = best_a;
  s.hard = Tensor({n});
  s.hard.data[best] = 1.0;
  s.soft = Tensor({n});
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (theta.data[i] <= 0.0) continue;
    s.soft.data[i] = std::exp((a[i] - mx) / tau);
    z += s.soft.data[i];
  }
  for (std::size_t i = 0; i < n; ++i) s.soft.data[i] /= z;
  return s;
}

Tape::Var Generator::Staged::at(const std::string& name) const {
  for (const auto& [n, v] : list)
    if (n == name) return v;
  throw ContractError("generator: unknown staged parameter " + name);
}

Generator::Generator(GeneratorConfig config, std::vector<int> object_ids,
                     std::uint64_t init_seed)
    : cfg_(config), object_ids_(std::move(object_ids)) {
  cfg_.validate(true);
  if (object_ids_.empty()) throw ParamError("generator: object id list is empty");
  for (int id : object_ids_)
    if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
      throw ParamError("generator: object id outside vocabulary");

  const std::size_t V = cfg_.vocab_size, E = cfg_.embed_dim, H = cfg_.hidden_dim;
  Rng rng(init_seed);
  auto add = [&](const std::string& name, std::vector<std::size_t> shape) -> Tensor& {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-0.08, 0.08);
    params_.emplace_back(name, std::move(t));
    return params_.back().second;
  };
  add("embed", {V, E});
  for (std::size_t l = 1; l <= cfg_.num_layers; ++l) {
    std::size_t in = (l == 1) ? E : H;
    add("lstm" + std::to_string(l) + ".w", {in + H, 4 * H});
    Tensor& b = add("lstm" + std::to_string(l) + ".b", {4 * H});
    for (std::size_t j = H; j < 2 * H; ++j) b.data[j] = 1.0;  // forget gate
  }
  add("xc.w", {cfg_.feature_dim, 4 * H});
  add("z.w", {cfg_.noise_dim, 4 * H});
  add("out.w", {H, V});
  add("out.b", {V});
}

Tensor& Generator::param(const std::string& name) {
  for (auto& [n, t] : params_)
    if (n == name) return t;
  throw ContractError("generator: unknown parameter " + name);
}

const Tensor& Generator::param(const std::string& name) const {
  return const_cast<Generator*>(this)->param(name);
}

void Generator::visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (auto& [n, t] : params_) fn(n, t);
}

void Generator::visit_params(
    const std::function<void(const std::string&, const Tensor&)>& fn) const {
  for (const auto& [n, t] : params_) fn(n, t);
}

Generator::Staged Generator::stage(Tape& tape, bool requires_grad) const {
  Staged s;
  for (const auto& [n, t] : params_) s.list.emplace_back(n, tape.leaf(t, requires_grad));
  return s;
}

Generator::State Generator::initial_state(Tape& tape, std::size_t batch) const {
  if (batch == 0) throw ContractError("generator: empty batch");
  State st;
  Tensor zero({batch, cfg_.hidden_dim});
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    st.h.push_back(tape.leaf(zero));
    st.c.push_back(tape.leaf(zero));
  }
  return st;
}

Tape::Var Generator::lstm_step(Tape& tape, const Staged& p, Tape::Var input_embed,
                               Tape::Var x_c, Tape::Var z, State& state) const {
  const std::size_t H = cfg_.hidden_dim;
  if (state.h.size() != cfg_.num_layers)
    throw ContractError("generator: state does not match num_layers");
  Tape::Var in = input_embed;
  Tape::Var out{};
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    std::string tag = "lstm" + std::to_string(l + 1);
    Tape::Var pre = tape.matmul(tape.concat_cols({in, state.h[l]}), p.at(tag + ".w"));
    if (l == 0) {
      pre = tape.add(pre, tape.matmul(x_c, p.at("xc.w")));
      pre = tape.add(pre, tape.matmul(z, p.at("z.w")));
    }
    pre = tape.add_rowvec(pre, p.at(tag + ".b"));
    Tape::Var i = tape.sigmoid_(tape.slice_cols(pre, 0, H));
    Tape::Var f = tape.sigmoid_(tape.slice_cols(pre, H, 2 * H));
    Tape::Var g = tape.tanh_(tape.slice_cols(pre, 2 * H, 3 * H));
    Tape::Var o = tape.sigmoid_(tape.slice_cols(pre, 3 * H, 4 * H));
    Tape::Var c_new = tape.add(tape.mul(f, state.c[l]), tape.mul(i, g));
    Tape::Var h_new = tape.mul(o, tape.tanh_(c_new));
    state.c[l] = c_new;
    state.h[l] = h_new;
    out = (l == 0) ? h_new : tape.add(h_new, out);  // residual tower
    in = out;
  }
  ++state.t;
  return tape.affine(out, p.at("out.w"), p.at("out.b"));
}

Tape::Var Generator::embed_objects(Tape& tape, const Staged& p, Tape::Var x_o_rows) const {
  if (tape.val(x_o_rows).cols() != object_ids_.size())
    throw ShapeError("generator: x_o width does not match the object vocabulary");
  std::vector<std::size_t> ids(object_ids_.begin(), object_ids_.end());
  return tape.matmul(x_o_rows, tape.gather_rows(p.at("embed"), ids));
}

Tape::Var Generator::ml_loss(Tape& tape, const Staged& p, const MlBatch& batch,
                             double beta, Rng& rng) const {
  const std::size_t B = batch.reference.size();
  if (B == 0) throw ContractError("generator: empty ML batch");
  if (batch.x_c.size() != B || batch.x_o.size() != B)
    throw ContractError("generator: ML batch arrays differ in length");
  if (!(beta > 0.0)) throw ParamError("generator: beta must be positive");

  std::size_t T = 0;
  for (std::size_t r = 0; r < B; ++r) {
    const Caption& ref = *batch.reference[r];
    for (int id : ref.ids) {
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.vocab_size)
        throw DataError("generator: reference token id outside vocabulary");
      if (id == Vocabulary::kPad || id == Vocabulary::kStart || id == Vocabulary::kEnd)
        throw DataError("generator: reference contains a sentinel token");
    }
    if (batch.x_c[r]->size() != cfg_.feature_dim)
      throw ShapeError("generator: x_c has wrong dimension");
    if (batch.x_o[r]->size() != object_ids_.size())
      throw ShapeError("generator: x_o has wrong dimension");
    T = std::max(T, ref.ids.size() + 1);  // +1 for the END prediction
  }

  Tensor xc({B, cfg_.feature_dim}), xo({B, object_ids_.size()}), z({B, cfg_.noise_dim});
  for (std::size_t r = 0; r < B; ++r) {
    std::copy(batch.x_c[r]->data.begin(), batch.x_c[r]->data.end(),
              xc.data.begin() + r * cfg_.feature_dim);
    std::copy(batch.x_o[r]->begin(), batch.x_o[r]->end(),
              xo.data.begin() + r * object_ids_.size());
    for (std::size_t j = 0; j < cfg_.noise_dim; ++j)
      z.data[r * cfg_.noise_dim + j] = rng.uniform(-1.0, 1.0);
  }
  Tape::Var xc_v = tape.leaf(xc), xo_v = tape.leaf(xo), z_v = tape.leaf(z);

  State st = initial_state(tape, B);
  Tape::Var in = embed_objects(tape, p, xo_v);
  Tape::Var acc{};
  for (std::size_t t = 0; t < T; ++t) {
    Tape::Var logits = lstm_step(tape, p, in, xc_v, z_v, st);
    Tape::Var lp = tape.log_clamped(tape.scaled_softmax(logits, beta));
    std::vector<std::size_t> targets(B, 0);
    Tensor weight({B});
    std::vector<std::size_t> next(B, static_cast<std::size_t>(Vocabulary::kPad));
    for (std::size_t r = 0; r < B; ++r) {
      const auto& ids = batch.reference[r]->ids;
      if (t < ids.size()) {
        targets[r] = static_cast<std::size_t>(ids[t]);
        next[r] = targets[r];
      } else if (t == ids.size()) {
        targets[r] = static_cast<std::size_t>(Vocabulary::kEnd);
      } else {
        continue;  // weight stays 0, target PAD is inert
      }
      weight.data[r] = 1.0 / static_cast<double>(ids.size() + 1);
    }
    Tape::Var term = tape.scale_rows_const(tape.pick_cols(lp, targets), weight);
    acc = acc.valid() ? tape.add(acc, term) : term;
    if (t + 1 < T) in = tape.gather_rows(p.at("embed"), next);
  }
  return tape.scale(tape.sum_all(acc), -1.0 / static_cast<double>(B));
}

Generator::Unrolled Generator::unroll_gumbel(Tape& tape, const Staged& p,
                                             const Tensor& x_c_rows,
                                             const Tensor& x_o_rows, Rng& rng) const {
  const std::size_t R = x_c_rows.rows(), V = cfg_.vocab_size;
  if (R == 0) throw ContractError("generator: empty unroll batch");
  if (x_c_rows.cols() != cfg_.feature_dim || x_o_rows.rows() != R ||
      x_o_rows.cols() != object_ids_.size())
    throw ShapeError("generator: unroll feature shapes do not match the config");

  // independent per-row streams: row order fixes the draw, batch-size independent
  std::vector<Rng> row_rng;
  row_rng.reserve(R);
  for (std::size_t r = 0; r < R; ++r) row_rng.emplace_back(rng.derive());

  Tensor z({R, cfg_.noise_dim});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < cfg_.noise_dim; ++j)
      z.data[r * cfg_.noise_dim + j] = row_rng[r].uniform(-1.0, 1.0);

  Tape::Var xc_v = tape.leaf(x_c_rows), xo_v = tape.leaf(x_o_rows), z_v = tape.leaf(z);
  State st = initial_state(tape, R);
  Tape::Var in = embed_objects(tape, p, xo_v);

  Unrolled u;
  u.captions.resize(R);
  std::vector<char> alive(R, 1);
  for (std::size_t t = 0; t < cfg_.max_len; ++t) {
    Tape::Var logits = lstm_step(tape, p, in, xc_v, z_v, st);
    Tape::Var theta = tape.scaled_softmax(logits, cfg_.beta);
    const Tensor& th = tape.val(theta);

    Tensor g({R, V}), hard({R, V}), mask({R}), pad_fill({R, V});
    std::vector<char> next_alive = alive;
    for (std::size_t r = 0; r < R; ++r) {
      if (!alive[r]) {
        pad_fill.data[r * V + Vocabulary::kPad] = 1.0;
        continue;
      }
      mask.data[r] = 1.0;
      std::size_t best = 0;
      double best_a = -1e300;
      for (std::size_t v = 0; v < V; ++v) {
        double gv = row_rng[r].gumbel();
        g.data[r * V + v] = gv;
        double a = gv + std::log(th.data[r * V + v]);
        if (a > best_a) {
          best_a = a;
          best = v;
        }
      }
      hard.data[r * V + best] = 1.0;
      if (best == static_cast<std::size_t>(Vocabulary::kEnd)) {
        next_alive[r] = 0;
      } else {
        u.captions[r].ids.push_back(static_cast<int>(best));
        if (t + 1 == cfg_.max_len) u.captions[r].truncated = true;
      }
    }

    Tape::Var soft = tape.scaled_softmax(
        tape.scale(tape.add_const(tape.log_clamped(theta), g), 1.0 / cfg_.tau), 1.0);
    Tape::Var st_out = tape.straight_through(soft, hard);
    Tape::Var masked = tape.add_const(tape.scale_rows_const(st_out, mask), pad_fill);
    u.step_outputs.push_back(masked);
    u.step_alive.push_back(mask);

    alive = next_alive;
    bool any = false;
    for (char a : alive) any |= a;
    if (!any) break;
    if (t + 1 < cfg_.max_len) in = tape.matmul(masked, p.at("embed"));
  }
  return u;
}

Generator::PlainState Generator::plain_state(std::size_t rows) const {
  PlainState st;
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    st.h.emplace_back(Tensor({rows, cfg_.hidden_dim}));
    st.c.emplace_back(Tensor({rows, cfg_.hidden_dim}));
  }
  return st;
}

Tensor Generator::step_plain(const Tensor& input_embed, const Tensor& x_c_rows,
                             const Tensor& z_rows, PlainState& state) const {
  Tape tape;
  Staged p = stage(tape, false);
  State st;
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    st.h.push_back(tape.leaf(state.h[l]));
    st.c.push_back(tape.leaf(state.c[l]));
  }
  Tape::Var logits = lstm_step(tape, p, tape.leaf(input_embed), tape.leaf(x_c_rows),
                               tape.leaf(z_rows), st);
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    state.h[l] = tape.val(st.h[l]);
    state.c[l] = tape.val(st.c[l]);
  }
  return tape.val(logits);
}

Tensor Generator::object_embed_plain(const Tensor& x_o_rows) const {
  Tape tape;
  Staged p = stage(tape, false);
  return tape.val(embed_objects(tape, p, tape.leaf(x_o_rows)));
}

Generated Generator::generate_caption(const Tensor& x_c, const std::vector<double>& x_o,
                                      DecodeMode mode, std::size_t beam_width, Rng& rng,
                                      std::size_t max_len) const {
  if (mode == DecodeMode::Beam) {
    auto hyps = beam_search(x_c, x_o, beam_width == 0 ? 1 : beam_width, max_len);
    return hyps.front();
  }
  if (x_c.size() != cfg_.feature_dim || x_o.size() != object_ids_.size())
    throw ShapeError("generator: feature dimensions do not match the config");
  const std::size_t V = cfg_.vocab_size;
  Rng local(rng.derive());
  Tensor xc = repeat_row(x_c, 1);
  Tensor xo({1, x_o.size()});
  std::copy(x_o.begin(), x_o.end(), xo.data.begin());
  Tensor z({1, cfg_.noise_dim});
  for (double& v : z.data) v = local.uniform(-1.0, 1.0);

  PlainState st = plain_state(1);
  Tensor in = object_embed_plain(xo);
  const Tensor& embed = param("embed");
  Generated out;
  std::vector<double> theta(V);
  bool ended = false;
  for (std::size_t t = 0; t < max_len && !ended; ++t) {
    Tensor logits = step_plain(in, xc, z, st);
    softmax_row(logits.data.data(), cfg_.beta, V, theta.data());
    std::size_t tok;
    if (mode == DecodeMode::Greedy) {
      tok = 0;
      for (std::size_t v = 1; v < V; ++v)
        if (theta[v] > theta[tok]) tok = v;
    } else {
      tok = local.categorical(theta.data(), V);
    }
    out.log_prob += std::log(theta[tok]);
    if (tok == static_cast<std::size_t>(Vocabulary::kEnd)) {
      ended = true;
    } else {
      out.caption.ids.push_back(static_cast<int>(tok));
      in = Tensor({1, cfg_.embed_dim});
      std::copy(embed.data.begin() + tok * cfg_.embed_dim,
                embed.data.begin() + (tok + 1) * cfg_.embed_dim, in.data.begin());
    }
  }
  out.caption.truncated = !ended;
  return out;
}

std::vector<Generated> Generator::generate_set(const Tensor& x_c,
                                               const std::vector<double>& x_o,
                                               std::size_t p, Rng& rng) const {
  if (p == 0) throw ContractError("generator: set size must be positive");
  // each member is decoded from its own derived stream, so the multiset of
  // captions depends only on the multiset of child seeds
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < p; ++i) seeds.push_back(rng.derive());
  std::vector<Generated> out;
  for (std::uint64_t s : seeds) {
    Rng child(s);
    out.push_back(generate_caption(x_c, x_o, DecodeMode::Sample, 0, child, cfg_.max_len));
  }
  return out;
}

std::vector<Generated> Generator::beam_search(const Tensor& x_c,
                                              const std::vector<double>& x_o,
                                              std::size_t width,
                                              std::size_t max_len) const {
  if (width == 0) throw ContractError("generator: beam width must be positive");
  if (x_c.size() != cfg_.feature_dim || x_o.size() != object_ids_.size())
    throw ShapeError("generator: feature dimensions do not match the config");
  const std::size_t V = cfg_.vocab_size, E = cfg_.embed_dim;
  const Tensor& embed = param("embed");

  struct Hyp {
    std::vector<int> ids;
    double logp = 0.0;
  };
  std::vector<Hyp> active(1);
  PlainState st = plain_state(1);
  Tensor xo({1, x_o.size()});
  std::copy(x_o.begin(), x_o.end(), xo.data.begin());
  Tensor in = object_embed_plain(xo);
  Tensor z({1, cfg_.noise_dim});  // beam decoding is deterministic: zero noise
  std::vector<Generated> finished;

  for (std::size_t t = 0; t < max_len && !active.empty(); ++t) {
    std::size_t A = active.size();
    Tensor xc = repeat_row(x_c, A);
    Tensor zr = repeat_row(z, A);
    Tensor logits = step_plain(in, xc, zr, st);

    struct Cand {
      double logp;
      std::size_t hyp, tok;
    };
    std::vector<Cand> cands;
    cands.reserve(A * V);
    std::vector<double> theta(V);
    for (std::size_t a = 0; a < A; ++a) {
      softmax_row(logits.data.data() + a * V, cfg_.beta, V, theta.data());
      for (std::size_t v = 0; v < V; ++v)
        cands.push_back({active[a].logp + std::log(theta[v]), a, v});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
      if (x.logp != y.logp) return x.logp > y.logp;
      if (x.tok != y.tok) return x.tok < y.tok;
      return x.hyp < y.hyp;
    });

    // the top `width` candidates overall; END candidates retire into
    // `finished` and give their slot up for the rest of the search
    std::vector<Hyp> next;
    std::vector<std::size_t> rows;
    std::size_t selected = 0;
    for (const Cand& c : cands) {
      if (selected >= width) break;
      ++selected;
      if (c.tok == static_cast<std::size_t>(Vocabulary::kEnd)) {
        Generated g;
        g.caption.ids = active[c.hyp].ids;
        g.log_prob = c.logp;
        finished.push_back(g);
        continue;
      }
      Hyp h = active[c.hyp];
      h.ids.push_back(static_cast<int>(c.tok));
      h.logp = c.logp;
      next.push_back(std::move(h));
      rows.push_back(c.hyp);
    }
    if (next.empty()) {
      active.clear();
      break;
    }
    PlainState nst = plain_state(next.size());
    Tensor nin({next.size(), E});
    for (std::size_t i = 0; i < next.size(); ++i) {
      for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        std::copy(st.h[l].data.begin() + rows[i] * cfg_.hidden_dim,
                  st.h[l].data.begin() + (rows[i] + 1) * cfg_.hidden_dim,
                  nst.h[l].data.begin() + i * cfg_.hidden_dim);
        std::copy(st.c[l].data.begin() + rows[i] * cfg_.hidden_dim,
                  st.c[l].data.begin() + (rows[i] + 1) * cfg_.hidden_dim,
                  nst.c[l].data.begin() + i * cfg_.hidden_dim);
      }
      std::size_t tok = static_cast<std::size_t>(next[i].ids.back());
      std::copy(embed.data.begin() + tok * E, embed.data.begin() + (tok + 1) * E,
                nin.data.begin() + i * E);
    }
    st = std::move(nst);
    in = std::move(nin);
    active = std::move(next);
    if (t + 1 == max_len) {
      for (const Hyp& h : active) {
        Generated g;
        g.caption.ids = h.ids;
        g.caption.truncated = true;
        g.log_prob = h.logp;
        finished.push_back(g);
      }
    }
  }
  std::sort(finished.begin(), finished.end(), [](const Generated& x, const Generated& y) {
    if (x.log_prob != y.log_prob) return x.log_prob > y.log_prob;
    return x.caption.ids < y.caption.ids;
  });
  if (finished.size() > width) finished.resize(width);
  if (finished.empty()) throw NumericError("generator: beam search produced no hypotheses");
  return finished;
}

}  // namespace capgan
