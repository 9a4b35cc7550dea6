#include <algorithm>
#include <cmath>
#include <map>

#include "capgan/discriminator.hpp"
#include "capgan/error.hpp"
#include "capgan/gradcheck.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace capgan;
using testutil::random_tensor;

namespace {

DiscriminatorConfig tiny_config() {
  DiscriminatorConfig c;
  c.vocab_size = 9;
  c.embed_dim = 3;
  c.hidden_dim = 4;
  c.n_dist = 2;
  c.n_views = 3;
  c.feature_dim = 3;
  return c;
}

CaptionSet sample_set() {
  return {Caption{{5, 7}, false}, Caption{{6, 8, 4}, false}, Caption{{5}, false}};
}

// Exhaustive loops straight from the definitions: project every sentence
// code, accumulate exp(-L1) proximities per view, including the self term.
Tensor naive_features(const Tensor& fs, const Tensor& fx, const Tensor& ts,
                      const Tensor& tx, std::size_t set_size, std::size_t N,
                      std::size_t O) {
  std::size_t R = fs.rows(), M = fs.cols(), B = R / set_size;
  Tensor K({R, N * O}), Kx({B, N * O});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t q = 0; q < N * O; ++q)
      for (std::size_t m = 0; m < M; ++m) K.at(r, q) += fs.at(r, m) * ts.at(m, q);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t q = 0; q < N * O; ++q)
      for (std::size_t m = 0; m < M; ++m) Kx.at(b, q) += fx.at(b, m) * tx.at(m, q);
  Tensor out({R, 2 * O});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < set_size; ++i) {
      std::size_t ri = b * set_size + i;
      for (std::size_t l = 0; l < O; ++l) {
        double d = 0.0;
        for (std::size_t j = 0; j < set_size; ++j) {
          double l1 = 0.0;
          for (std::size_t n = 0; n < N; ++n)
            l1 += std::fabs(K.at(ri, l * N + n) - K.at(b * set_size + j, l * N + n));
          d += std::exp(-l1);
        }
        out.at(ri, l) = d;
        double l1x = 0.0;
        for (std::size_t n = 0; n < N; ++n)
          l1x += std::fabs(K.at(ri, l * N + n) - Kx.at(b, l * N + n));
        out.at(ri, O + l) = std::exp(-l1x);
      }
    }
  return out;
}

}  // namespace

TEST_CASE("discriminator config and parameter layout") {
  DiscriminatorConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.n_views = 0;
  CHECK_THROWS_AS(c.validate(), ParamError);
  c = tiny_config();
  c.vocab_size = 3;
  CHECK_THROWS_AS(c.validate(), ParamError);

  Discriminator d(tiny_config(), 7);
  std::map<std::string, std::vector<std::size_t>> shapes;
  d.visit_params([&](const std::string& n, const Tensor& t) { shapes[n] = t.shape; });
  CHECK(shapes.at("embed") == std::vector<std::size_t>{9, 3});
  CHECK(shapes.at("lstm.w") == std::vector<std::size_t>{3 + 4, 16});
  CHECK(shapes.at("ts.w") == std::vector<std::size_t>{4, 6});
  CHECK(shapes.at("tx.w") == std::vector<std::size_t>{4, 6});
  CHECK(shapes.at("out.w") == std::vector<std::size_t>{6, 2});
  d.visit_params([&](const std::string& n, const Tensor& t) {
    if (n != "lstm.b") return;
    for (std::size_t i = 4; i < 8; ++i) CHECK(t.data[i] == 1.0);
  });
}

TEST_CASE("distance features match the exhaustive oracle") {
  Rng rng(2024);
  for (int rep = 0; rep < 50; ++rep) {
    DiscriminatorConfig c = tiny_config();
    c.hidden_dim = 2 + rng.raw() % 4;
    c.n_dist = 1 + rng.raw() % 3;
    c.n_views = 1 + rng.raw() % 3;
    std::size_t set_size = 1 + rng.raw() % 4;
    std::size_t B = 1 + rng.raw() % 3;
    Discriminator d(c, 100 + rep);

    Tensor fs = random_tensor({B * set_size, c.hidden_dim}, rng);
    Tensor fx = random_tensor({B, c.hidden_dim}, rng);
    Tensor ts, tx;
    d.visit_params([&](const std::string& n, const Tensor& t) {
      if (n == "ts.w") ts = t;
      if (n == "tx.w") tx = t;
    });
    Tape tape;
    auto p = d.stage(tape, false);
    Tape::Var feats =
        d.distance_features(tape, p, tape.leaf(fs), tape.leaf(fx), set_size);
    Tensor expect = naive_features(fs, fx, ts, tx, set_size, c.n_dist, c.n_views);
    const Tensor& got = tape.val(feats);
    REQUIRE(got.shape == expect.shape);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("distance features: hand values for identical and lone sentences") {
  DiscriminatorConfig c = tiny_config();
  Discriminator d(c, 5);
  Rng rng(9);
  // three identical codes: every pair distance is 0, so each view sums to 3
  Tensor one_code = random_tensor({1, c.hidden_dim}, rng);
  Tensor fs({3, c.hidden_dim});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t m = 0; m < c.hidden_dim; ++m) fs.at(r, m) = one_code.data[m];
  Tensor fx = random_tensor({1, c.hidden_dim}, rng);
  Tape tape;
  auto p = d.stage(tape, false);
  const Tensor& f3 = tape.val(d.distance_features(tape, p, tape.leaf(fs), tape.leaf(fx), 3));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t l = 0; l < c.n_views; ++l)
      CHECK(f3.at(r, l) == doctest::Approx(3.0).epsilon(1e-12));

  // a singleton set only carries the self term
  const Tensor& f1 =
      tape.val(d.distance_features(tape, p, tape.leaf(one_code), tape.leaf(fx), 1));
  for (std::size_t l = 0; l < c.n_views; ++l) CHECK(f1.at(0, l) == 1.0);

  CHECK_THROWS_AS(d.distance_features(tape, p, tape.leaf(fs), tape.leaf(fx), 2),
                  ShapeError);
}

TEST_CASE("discriminate: valid probability, permutation invariance") {
  DiscriminatorConfig c = tiny_config();
  Discriminator d(c, 17);
  Tensor xc = Tensor::matrix(1, 3, {0.4, -0.2, 0.1});
  CaptionSet caps = sample_set();

  auto prob_of = [&](const CaptionSet& set) {
    Tape tape;
    auto p = d.stage(tape, false);
    Tape::Var fs = d.encode_captions(tape, p, set);
    Tape::Var fx = d.embed_images(tape, p, tape.leaf(xc));
    auto out = d.discriminate(tape, p, fs, fx, set.size());
    return tape.val(out.prob_real).data[0];
  };
  double base = prob_of(caps);
  CHECK(base > 0.0);
  CHECK(base < 1.0);
  CaptionSet perm = {caps[2], caps[0], caps[1]};
  CHECK(prob_of(perm) == doctest::Approx(base).epsilon(1e-12));
  CHECK(prob_of(caps) == base);  // rebuilt tape, bit-identical
}

TEST_CASE("encoder: rows are independent of their batch companions") {
  DiscriminatorConfig c = tiny_config();
  Discriminator d(c, 23);
  Tape tape;
  auto p = d.stage(tape, false);
  CaptionSet both = {Caption{{5}, false}, Caption{{6, 8, 4, 7}, false}};
  CaptionSet alone = {Caption{{5}, false}};
  Tensor fb = tape.val(d.encode_captions(tape, p, both));  // copies: growing the
  Tensor fa = tape.val(d.encode_captions(tape, p, alone)); // tape moves its nodes
  for (std::size_t m = 0; m < c.hidden_dim; ++m)
    CHECK(fb.at(0, m) == doctest::Approx(fa.at(0, m)).epsilon(1e-12));
  // the short row's state froze after its END step
  CaptionSet padded_more = {Caption{{5}, false}, Caption{{6, 8, 4, 7, 7, 7}, false}};
  Tensor fp = tape.val(d.encode_captions(tape, p, padded_more));
  for (std::size_t m = 0; m < c.hidden_dim; ++m)
    CHECK(fp.at(0, m) == doctest::Approx(fa.at(0, m)).epsilon(1e-12));
}

TEST_CASE("encode_steps on one-hot rows equals encode_captions") {
  DiscriminatorConfig c = tiny_config();
  Discriminator d(c, 31);
  CaptionSet caps = sample_set();
  Tape tape;
  auto p = d.stage(tape, false);
  Tensor by_ids = tape.val(d.encode_captions(tape, p, caps));

  std::size_t R = caps.size(), T = 0;
  for (const auto& cap : caps) T = std::max(T, cap.ids.size() + 1);
  std::vector<Tape::Var> steps;
  std::vector<Tensor> masks;
  for (std::size_t t = 0; t < T; ++t) {
    Tensor step({R, c.vocab_size}), mask({R});
    for (std::size_t r = 0; r < R; ++r) {
      const auto& s = caps[r].ids;
      if (t < s.size()) {
        step.at(r, static_cast<std::size_t>(s[t])) = 1.0;
        mask.data[r] = 1.0;
      } else if (t == s.size()) {
        step.at(r, Vocabulary::kEnd) = 1.0;
        mask.data[r] = 1.0;
      } else {
        step.at(r, Vocabulary::kPad) = 1.0;
      }
    }
    steps.push_back(tape.leaf(step));
    masks.push_back(std::move(mask));
  }
  const Tensor& by_steps = tape.val(d.encode_steps(tape, p, steps, masks));
  REQUIRE(by_steps.shape == by_ids.shape);
  for (std::size_t i = 0; i < by_ids.size(); ++i)
    CHECK(by_steps.data[i] == doctest::Approx(by_ids.data[i]).epsilon(1e-12));
}

TEST_CASE("discriminator gradient agrees with central differences") {
  DiscriminatorConfig c = tiny_config();
  Discriminator d(c, 41);
  std::vector<std::string> names;
  std::vector<Tensor> params;
  d.visit_params([&](const std::string& n, const Tensor& t) {
    names.push_back(n);
    params.push_back(t);
  });
  CaptionSet caps = sample_set();
  Tensor xc = Tensor::matrix(1, 3, {0.4, -0.2, 0.1});
  auto map = testutil::tape_map([&](Tape& t, std::vector<Tape::Var>& vars) {
    Discriminator::Staged p;
    for (std::size_t i = 0; i < names.size(); ++i) p.list.emplace_back(names[i], vars[i]);
    Tape::Var fs = d.encode_captions(t, p, caps);
    Tape::Var fx = d.embed_images(t, p, t.leaf(xc));
    auto out = d.discriminate(t, p, fs, fx, caps.size());
    // scalar objective touching both heads
    return t.add(t.sum_all(out.prob_real), t.scale(t.sum_all(out.features), 0.1));
  });
  CHECK(finite_difference_check(map, params, 1e-4) < 1e-3);

  std::vector<Tensor> grads = map.gradient(params);
  Rng dir_rng(555);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<Tensor> dir = params;
    double dot = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i)
      for (std::size_t j = 0; j < dir[i].size(); ++j) {
        dir[i].data[j] = dir_rng.uniform(-1.0, 1.0);
        dot += dir[i].data[j] * grads[i].data[j];
      }
    const double eps = 1e-5;
    std::vector<Tensor> pp = params, pm = params;
    for (std::size_t i = 0; i < dir.size(); ++i)
      for (std::size_t j = 0; j < dir[i].size(); ++j) {
        pp[i].data[j] += eps * dir[i].data[j];
        pm[i].data[j] -= eps * dir[i].data[j];
      }
    double central = (map.value(pp) - map.value(pm)) / (2.0 * eps);
    CHECK(std::fabs(dot - central) / (std::fabs(dot) + std::fabs(central) + 1e-12) < 1e-6);
  }
}

TEST_CASE("discriminator input validation") {
  DiscriminatorConfig c = tiny_config();
  Discriminator d(c, 3);
  Tape tape;
  auto p = d.stage(tape, false);
  CHECK_THROWS_AS(d.encode_captions(tape, p, {}), ContractError);
  CHECK_THROWS_AS(d.encode_captions(tape, p, {Caption{{42}, false}}), DataError);
  CHECK_THROWS_AS(d.embed_images(tape, p, tape.leaf(Tensor::matrix(1, 5, {1, 2, 3, 4, 5}))),
                  ShapeError);
  Tensor fs({4, c.hidden_dim}), fx({1, c.hidden_dim});
  CHECK_THROWS_AS(d.distance_features(tape, p, tape.leaf(fs), tape.leaf(fx), 3),
                  ShapeError);
  // 4 rows in sets of 2 needs two image codes, not one
  CHECK_THROWS_AS(d.distance_features(tape, p, tape.leaf(fs), tape.leaf(fx), 2),
                  ShapeError);
}
