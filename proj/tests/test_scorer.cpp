#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "tkg/scorer.hpp"

using namespace tkg;
using gradcheck::check_gradients;
using gradcheck::DTape;
using gradcheck::DTensor;
using gradcheck::DVar;
using gradcheck::random_tensor;

namespace {

EncoderConfig tiny_cfg() {
  EncoderConfig cfg;
  cfg.d = 2;
  cfg.history_len = 2;
  cfg.n_max = 4;
  cfg.n_heads = 1;
  cfg.n_layers = 1;
  cfg.d_inner = 5;
  cfg.d_out = 2;
  return cfg;
}

TemporalKG tiny_graph() {
  Vocab v;
  for (int i = 0; i < 4; ++i) v.entity_id("e" + std::to_string(i), ParseMode::Grow);
  for (int i = 0; i < 3; ++i) v.relation_id("r" + std::to_string(i), ParseMode::Grow);
  for (int i = 0; i < 8; ++i) v.time_id(std::to_string(i), ParseMode::Grow);
  std::vector<Quadruple> quads{
      {0, 0, 1, 2}, {1, 1, 2, 3}, {2, 2, 3, 4}, {0, 1, 3, 4}};
  return TemporalKG(quads, v);
}

}  // namespace

TEST_CASE("pair_rep with zero parameters is [0 : v_s : 0 : v_o]") {
  EncoderConfig cfg = tiny_cfg();
  TemporalKG g = tiny_graph();
  ModelParams p = init_params<float>(4, 6, cfg, 1);
  // zero everything except the entity table so v_s / v_o stay visible
  Tensor keep = p.entity_emb;
  p.for_each([](const std::string&, Tensor& t) {
    for (float& v : t.data) v = 0.0f;
  });
  p.entity_emb = keep;

  Tape tape;
  ParamVars pv = register_params(tape, p);
  Var rep = pair_rep(tape, pv, g, 0, 3, 5, cfg);
  REQUIRE(rep.value().numel() == 8);  // 2*(d_out + d)
  CHECK(rep.value().data[0] == 0.0f);
  CHECK(rep.value().data[1] == 0.0f);
  CHECK(rep.value().data[2] == p.entity_emb.at(0, 0));
  CHECK(rep.value().data[3] == p.entity_emb.at(0, 1));
  CHECK(rep.value().data[4] == 0.0f);
  CHECK(rep.value().data[5] == 0.0f);
  CHECK(rep.value().data[6] == p.entity_emb.at(3, 0));
  CHECK(rep.value().data[7] == p.entity_emb.at(3, 1));
}

TEST_CASE("pair_rep length is 4d when d_out = d") {
  EncoderConfig cfg;
  cfg.d = 50;
  cfg.d_out = 50;
  cfg.history_len = 3;
  cfg.n_max = 5;
  cfg.n_heads = 4;
  cfg.n_layers = 1;
  cfg.d_inner = 16;
  TemporalKG g = tiny_graph();
  ModelParams p = init_params<float>(4, 6, cfg, 1);
  Tape tape;
  ParamVars pv = register_params(tape, p);
  Var rep = pair_rep(tape, pv, g, 0, 1, 5, cfg);
  CHECK(rep.value().numel() == 200);
}

TEST_CASE("pair_rep is pure: identical calls give identical vectors") {
  EncoderConfig cfg = tiny_cfg();
  TemporalKG g = tiny_graph();
  ModelParams p = init_params<float>(4, 6, cfg, 9);
  auto run = [&] {
    Tape tape;
    ParamVars pv = register_params(tape, p);
    return pair_rep(tape, pv, g, 1, 2, 5, cfg).value();
  };
  CHECK(run().data == run().data);
}

TEST_CASE("transform with zero weights is the identity (pure residual)") {
  EncoderConfig cfg = tiny_cfg();
  ModelParams p = init_params<float>(4, 6, cfg, 3);
  for (Tensor* t : {&p.sim_w1, &p.sim_b1, &p.sim_w2, &p.sim_b2}) {
    for (float& v : t->data) v = 0.0f;
  }
  Tape tape;
  ParamVars pv = register_params(tape, p);
  Tensor x = Tensor::from({8}, {1, -2, 3, -4, 5, -6, 7, -8});
  Var out = transform(tape.leaf(x), pv);
  CHECK(out.value().data == x.data);
}

TEST_CASE("transform at x = 0 is W2 relu(b1) + b2") {
  EncoderConfig cfg = tiny_cfg();
  ModelParams p = init_params<float>(4, 6, cfg, 13);
  Rng rng(2);
  for (float& v : p.sim_b1.data) v = static_cast<float>(rng_uniform(rng, -1, 1));
  for (float& v : p.sim_b2.data) v = static_cast<float>(rng_uniform(rng, -1, 1));
  Tape tape;
  ParamVars pv = register_params(tape, p);
  Var out = transform(tape.leaf(Tensor({8})), pv);
  for (std::size_t j = 0; j < 8; ++j) {
    double expect = p.sim_b2.data[j];
    for (std::size_t i = 0; i < 8; ++i) {
      expect += std::max(p.sim_b1.data[i], 0.0f) * p.sim_w2.at(i, j);
    }
    CHECK(out.value().data[j] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("transform matches the scalar-loop oracle on a random 8-dim case") {
  EncoderConfig cfg = tiny_cfg();
  ModelParamsT<double> pd = init_params<double>(4, 6, cfg, 21);
  ModelParams pf = init_params<float>(4, 6, cfg, 21);
  Rng rng(4);
  Tensor x({8});
  oracles::Vec xo(8);
  for (std::size_t i = 0; i < 8; ++i) {
    x.data[i] = static_cast<float>(rng_uniform(rng, -2, 2));
    xo[i] = x.data[i];
  }
  Tape tape;
  ParamVars pv = register_params(tape, pf);
  Var out = transform(tape.leaf(x), pv);
  oracles::Vec expect = oracles::transform(pd, xo);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(out.value().data[i] == doctest::Approx(expect[i]).epsilon(1e-6));
  }
}

TEST_CASE("score is symmetric and reduces to the inner product at zero weights") {
  EncoderConfig cfg = tiny_cfg();
  ModelParams p = init_params<float>(4, 6, cfg, 33);

  SUBCASE("zero weights: score(x, x) = ||x||^2 and unit vectors score 1") {
    for (Tensor* t : {&p.sim_w1, &p.sim_b1, &p.sim_w2, &p.sim_b2}) {
      for (float& v : t->data) v = 0.0f;
    }
    Tape tape;
    ParamVars pv = register_params(tape, p);
    Tensor x = Tensor::from({8}, {1, 2, 0, 0, -1, 0, 0, 3});
    Var s = score(tape.leaf(x), tape.leaf(x), pv);
    CHECK(s.value().data[0] == doctest::Approx(1 + 4 + 1 + 9).epsilon(1e-6));

    Tensor e0({8});
    e0.data[0] = 1.0f;
    Var unit = score(tape.leaf(e0), tape.leaf(e0), pv);
    CHECK(unit.value().data[0] == doctest::Approx(1.0).epsilon(1e-6));
  }

  SUBCASE("score(a, b) == score(b, a) for random inputs") {
    Rng rng(6);
    Tape tape;
    ParamVars pv = register_params(tape, p);
    for (int trial = 0; trial < 5; ++trial) {
      Tensor a({8}), b({8});
      for (float& v : a.data) v = static_cast<float>(rng_uniform(rng, -2, 2));
      for (float& v : b.data) v = static_cast<float>(rng_uniform(rng, -2, 2));
      Var ab = score(tape.leaf(a), tape.leaf(b), pv);
      Var ba = score(tape.leaf(b), tape.leaf(a), pv);
      CHECK(ab.value().data[0] == doctest::Approx(ba.value().data[0]).epsilon(1e-6));
    }
  }
}

TEST_CASE("score gradients pass finite-difference checks") {
  // leaves: both inputs plus the four similarity tensors
  const std::size_t dim = 6;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(300 + seed);
    auto build = [dim](DTape& tape, std::vector<DVar>& in) -> DVar {
      DVar x = in[0];
      DVar row_x = reshape(x, {1, dim});
      DVar mx = add(reshape(add_rowvec(matmul(relu(add_rowvec(matmul(row_x, in[2]), in[3])), in[4]), in[5]), {dim}), x);
      DVar y = in[1];
      DVar row_y = reshape(y, {1, dim});
      DVar my = add(reshape(add_rowvec(matmul(relu(add_rowvec(matmul(row_y, in[2]), in[3])), in[4]), in[5]), {dim}), y);
      return dot(mx, my);
    };
    auto res = check_gradients(
        build, {random_tensor({dim}, rng), random_tensor({dim}, rng),
                random_tensor({dim, dim}, rng), random_tensor({dim}, rng),
                random_tensor({dim, dim}, rng), random_tensor({dim}, rng)});
    CHECK(res.max_rel_err < 1e-4);
  }
}
