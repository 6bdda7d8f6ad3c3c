#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "scilm/loss.hpp"
#include "scilm/sampler.hpp"
#include "test_util.hpp"

using namespace scilm;

namespace {

// Hand-assembled prototype set; every field filled explicitly.
PrototypeSet hand_protos(const std::vector<Matrix>& semantic, const std::vector<Matrix>& target) {
  PrototypeSet protos;
  for (std::size_t i = 0; i < semantic.size(); ++i) {
    ClassPrototypes cp;
    cp.class_id = static_cast<int>(i);
    cp.semantic = semantic[i];
    cp.visual_avg = target[i];
    cp.visual_attn = target[i];
    cp.visual_fused = target[i];
    cp.attn = Matrix(1, 1, 1.0);
    protos.classes.push_back(cp);
  }
  return protos;
}

PrototypeSet random_protos(std::size_t k, std::size_t p, Rng& rng) {
  PrototypeSet protos;
  for (std::size_t i = 0; i < k; ++i) {
    ClassPrototypes cp;
    cp.class_id = static_cast<int>(i);
    cp.semantic = Matrix(p, 1);
    cp.visual_avg = Matrix(p, 1);
    cp.visual_attn = Matrix(p, 1);
    cp.visual_fused = Matrix(p, 1);
    for (std::size_t j = 0; j < p; ++j) {
      cp.semantic[j] = rng.normal();
      cp.visual_avg[j] = rng.normal();
      cp.visual_attn[j] = rng.normal();
      cp.visual_fused[j] = 0.4 * cp.visual_avg[j] + 0.6 * cp.visual_attn[j];
    }
    cp.attn = Matrix(2, 1, 0.5);
    protos.classes.push_back(cp);
  }
  return protos;
}

}  // namespace

TEST_CASE("matching loss: zero at coincidence, hand value, brute force") {
  const Matrix v(2, 1, {3, 4});
  PrototypeSet same = hand_protos({v, v}, {v, v});
  CHECK(loss_l1(same, Variant::kFused) == 0.0);

  PrototypeSet apart = hand_protos({Matrix(2, 1, {0, 0})}, {Matrix(2, 1, {3, 4})});
  CHECK(loss_l1(apart, Variant::kFused) == 25.0);

  Rng rng(61);
  const PrototypeSet protos = random_protos(5, 3, rng);
  for (const Variant variant : {Variant::kAverage, Variant::kAttention, Variant::kFused}) {
    double brute = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      brute += sq_dist(protos.classes[i].semantic, protos.target(i, variant));
    brute /= 5.0;
    CHECK(std::fabs(loss_l1(protos, variant) - brute) < 1e-12);
  }
}

TEST_CASE("latent cosine loss: aligned, orthogonal, direct formula") {
  // identity-like shared layer on nonnegative inputs passes vectors through
  SharedParams eye{Matrix(2, 2, {1, 0, 0, 1}), Matrix(2, 1)};
  const Matrix e1(2, 1, {1, 0});
  const Matrix e2(2, 1, {0, 1});
  PrototypeSet aligned = hand_protos({e1}, {e1});
  CHECK(loss_l2(aligned, eye, Variant::kFused) == Catch::Approx(1.0).epsilon(1e-12));
  PrototypeSet orthogonal = hand_protos({e1}, {e2});
  CHECK(loss_l2(orthogonal, eye, Variant::kFused) == Catch::Approx(0.0).margin(1e-15));

  Rng rng(62);
  SharedParams shared{Matrix(3, 3), Matrix(3, 1)};
  for (std::size_t i = 0; i < shared.ws.size(); ++i) shared.ws[i] = rng.normal();
  const PrototypeSet protos = random_protos(4, 3, rng);
  double brute = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const Matrix a = shared_embed(protos.classes[i].semantic, shared);
    const Matrix b = shared_embed(protos.target(i, Variant::kAttention), shared);
    double na = std::max(norm2(a), 1e-12), nb = std::max(norm2(b), 1e-12);
    brute += dot(a, b) / (na * nb);
  }
  brute /= 4.0;
  CHECK(std::fabs(loss_l2(protos, shared, Variant::kAttention) - brute) < 1e-12);
}

TEST_CASE("squared-norm cosine flag reproduces the non-invariant form") {
  SharedParams eye{Matrix(2, 2, {1, 0, 0, 1}), Matrix(2, 1)};
  const Matrix v(2, 1, {2, 0});  // norm 2, squared norm 4
  PrototypeSet protos = hand_protos({v}, {v});
  CHECK(loss_l2(protos, eye, Variant::kFused, false) == Catch::Approx(1.0).epsilon(1e-12));
  // u'v / (||u||^2 ||v||^2) = 4 / 16
  CHECK(loss_l2(protos, eye, Variant::kFused, true) == Catch::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("separation loss: hand enumeration and reductions") {
  const Matrix zero(1, 1, {0.0});
  const Matrix one(1, 1, {1.0});
  PrototypeSet two = hand_protos({zero, one}, {zero, one});
  // pairs: (1,1)=0, (2,2)=0, cross pairs max(2-1,0)=1 each -> mean 0.5
  CHECK(loss_l3(two, 2.0, Variant::kFused) == Catch::Approx(0.5).epsilon(1e-12));

  PrototypeSet single = hand_protos({Matrix(2, 1, {1, 1})}, {Matrix(2, 1, {2, 3})});
  CHECK(loss_l3(single, 2.0, Variant::kFused) ==
        Catch::Approx(sq_dist(single.classes[0].semantic, single.classes[0].visual_fused))
            .epsilon(1e-12));

  // matched pairs coincide and cross distances exceed the margin -> zero
  const Matrix far1(1, 1, {0.0});
  const Matrix far2(1, 1, {10.0});
  PrototypeSet separated = hand_protos({far1, far2}, {far1, far2});
  CHECK(loss_l3(separated, 2.0, Variant::kFused) == 0.0);
}

TEST_CASE("separation loss is nondecreasing in the margin") {
  Rng rng(63);
  for (int trial = 0; trial < 10; ++trial) {
    const PrototypeSet protos = random_protos(4, 3, rng);
    double previous = -1.0;
    for (const double gamma : {0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      const double value = loss_l3(protos, gamma, Variant::kFused);
      CHECK(value >= previous - 1e-12);
      previous = value;
    }
  }
}

TEST_CASE("total loss recombination and endpoints") {
  Rng rng(64);
  const PrototypeSet protos = random_protos(3, 4, rng);
  ModelConfig config;
  config.q = 2;
  config.p = 4;
  config.h = 3;
  SenParams sen{Matrix(3, 2, 0.1), Matrix(3, 1, 0.0), Matrix(4, 3, -0.2), Matrix(4, 1, 0.3)};
  SharedParams shared{Matrix(3, 4, 0.25), Matrix(3, 1, 0.0)};

  config.lambda_q = 1.0;
  config.beta = 0.0;
  config.lambda_reg = 0.0;
  CHECK(total_loss(protos, sen, shared, config).total ==
        Catch::Approx(loss_l1(protos, config.variant)).epsilon(1e-12));

  config.lambda_q = 0.0;
  CHECK(total_loss(protos, sen, shared, config).total ==
        Catch::Approx(loss_l3(protos, config.gamma, config.variant)).epsilon(1e-12));

  config.lambda_q = 0.3;
  config.beta = 0.7;
  config.lambda_reg = 1e-3;
  const LossBreakdown lb = total_loss(protos, sen, shared, config);
  const double recombined =
      config.lambda_q * lb.l1 + (1.0 - config.lambda_q) * lb.l3 - config.beta * lb.l2 +
      config.lambda_reg * lb.reg;
  CHECK(std::fabs(lb.total - recombined) < 1e-9);
  CHECK(lb.l1 >= 0.0);
  CHECK(lb.l3 >= 0.0);
  CHECK(lb.reg >= 0.0);
  CHECK(lb.l2 >= -1.0 - 1e-12);
  CHECK(lb.l2 <= 1.0 + 1e-12);
  const double reg_brute = sum_sq(sen.w1) + sum_sq(sen.b1) + sum_sq(sen.w2) + sum_sq(sen.b2) +
                           sum_sq(shared.ws) + sum_sq(shared.bs);
  CHECK(std::fabs(lb.reg - reg_brute) < 1e-12);
}

TEST_CASE("averaged variant ignores attention internals") {
  Rng rng(65);
  PrototypeSet protos = random_protos(3, 4, rng);
  PrototypeSet perturbed = protos;
  for (ClassPrototypes& cp : perturbed.classes) {
    for (std::size_t j = 0; j < cp.visual_attn.size(); ++j) cp.visual_attn[j] += 10.0;
    for (std::size_t j = 0; j < cp.attn.size(); ++j) cp.attn[j] = 0.123;
  }
  SharedParams shared{Matrix(2, 4, 0.5), Matrix(2, 1, 0.1)};
  ModelConfig config;
  config.q = 2;
  config.p = 4;
  config.h = 2;
  SenParams sen{Matrix(2, 2, 0.1), Matrix(2, 1), Matrix(4, 2, 0.1), Matrix(4, 1)};
  config.variant = Variant::kAverage;
  const LossBreakdown a = total_loss(protos, sen, shared, config);
  const LossBreakdown b = total_loss(perturbed, sen, shared, config);
  CHECK(a.total == b.total);
  CHECK(a.l1 == b.l1);
  CHECK(a.l2 == b.l2);
  CHECK(a.l3 == b.l3);
}

TEST_CASE("tape loss agrees with the plain loss for every variant") {
  const Dataset ds = testutil::make_toy_dataset({7, 5, 9}, 4, 3, 66);
  ModelConfig config;
  config.q = 3;
  config.p = 4;
  config.h = 5;
  config.n = 3;
  config.lambda_q = 0.35;
  config.beta = 0.8;
  config.lambda_reg = 2e-4;
  Rng rng(67);
  auto [sen, shared] = init_params(config, rng);
  const BalancedBatch batch = sample_balanced_batch(ds, config.n, rng);
  const PrototypeSet plain = build_prototypes(batch, ds, sen, config.lambda_p);

  for (const Variant variant : {Variant::kAverage, Variant::kAttention, Variant::kFused}) {
    config.variant = variant;
    Tape tape;
    const ParamNodes pn = register_params(tape, sen, shared);
    const auto nodes =
        build_prototype_nodes(tape, batch, ds, pn, variant, config.lambda_p);
    const LossNodes ln = build_loss_nodes(tape, nodes, pn, config);
    const LossBreakdown from_tape = read_loss_values(tape, ln);
    const LossBreakdown from_plain = total_loss(plain, sen, shared, config);
    CHECK(std::fabs(from_tape.l1 - from_plain.l1) < 1e-12);
    CHECK(std::fabs(from_tape.l2 - from_plain.l2) < 1e-12);
    CHECK(std::fabs(from_tape.l3 - from_plain.l3) < 1e-12);
    CHECK(std::fabs(from_tape.reg - from_plain.reg) < 1e-12);
    CHECK(std::fabs(from_tape.total - from_plain.total) < 1e-12);
  }
}
