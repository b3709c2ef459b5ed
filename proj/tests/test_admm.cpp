#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pimforge/admm.hpp"
#include "pimforge/dataset.hpp"
#include "pimforge/network.hpp"

#include "helpers.hpp"

using namespace pimforge;

namespace {

// f(w) = 1/2 ||w - t||^2 over the first layer's weights; analytic gradient.
struct QuadraticProblem {
  std::vector<double> target;

  std::size_t steps_per_epoch() const { return 1; }
  void start_epoch(Rng&) {}
  double loss_and_grad(const Model& m, std::size_t, Gradients& g) const {
    g = Gradients::zeros_like(m);
    double loss = 0.0;
    const auto w = m.layers[0].weights.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w[i] - target[i];
      loss += 0.5 * d * d;
      g.weights[0][i] = d;
    }
    return loss;
  }
};

// two scalar filters
Model two_filter_model(std::vector<double> w) {
  Model m;
  m.num_conv_layers = 1;
  m.layers.push_back(testutil::make_layer(Tensor4(testutil::conv_shape(2, 1, 1, 1), std::move(w))));
  return m;
}

}  // namespace

TEST_CASE("penalty gradient is rho * (W - Z + U) exactly", "[admm]") {
  SECTION("rho = 0 reduces to the plain data gradient") {
    Model m = two_filter_model({2.0, -1.0});
    QuadraticProblem prob{{0.0, 0.0}};
    AdmmState state = AdmmState::init(
        m, std::vector<LayerConstraint>{{0, SparsityConstraint(GroupKind::Filter, 1)}},
        std::nullopt, 0.0);
    Gradients plain, augmented;
    prob.loss_and_grad(m, 0, plain);
    augmented_loss_gradient(m, prob, 0, state, augmented);
    REQUIRE(augmented.weights[0] == plain.weights[0]);
    REQUIRE(augmented.biases[0] == plain.biases[0]);
  }

  SECTION("zero data gradient, W = Z, U = 0 gives a zero total gradient") {
    Model m = two_filter_model({2.0, 0.0});  // already feasible for budget 1
    QuadraticProblem prob{{2.0, 0.0}};       // data gradient vanishes at W
    AdmmState state = AdmmState::init(
        m, std::vector<LayerConstraint>{{0, SparsityConstraint(GroupKind::Filter, 1)}},
        std::nullopt, 2.0);
    REQUIRE(state.terms[0].z == m.layers[0].weights);
    Gradients g;
    augmented_loss_gradient(m, prob, 0, state, g);
    for (double v : g.weights[0]) REQUIRE(v == 0.0);
  }

  SECTION("scalar case: w=2, z=1, u=0.5, rho=2 gives penalty gradient 3") {
    Model m;
    m.num_conv_layers = 1;
    m.layers.push_back(testutil::make_layer(Tensor4(testutil::conv_shape(1, 1, 1, 1), {2.0})));
    AdmmState state;
    AdmmTerm term;
    term.layer = 0;
    term.sparsity = SparsityConstraint(GroupKind::Filter, 1);
    term.z = Tensor4(m.layers[0].weights.shape(), {1.0});
    term.u = Tensor4(m.layers[0].weights.shape(), {0.5});
    term.rho = 2.0;
    state.terms.push_back(term);

    Gradients g = Gradients::zeros_like(m);
    add_penalty_gradient(g, m, state);
    REQUIRE(g.weights[0][0] == Catch::Approx(3.0).epsilon(1e-15));  // 2 * (2 - 1 + 0.5)
    REQUIRE(g.biases[0][0] == 0.0);  // biases carry no penalty
  }
}

TEST_CASE("primal residual is the Frobenius norm of W - Z", "[admm]") {
  SECTION("W == Z gives zero") {
    Model m = two_filter_model({1.0, 1.0});
    AdmmState state;
    AdmmTerm term;
    term.layer = 0;
    term.sparsity = SparsityConstraint(GroupKind::Filter, 2);
    term.z = m.layers[0].weights;
    term.u = Tensor4(m.layers[0].weights.shape());
    state.terms.push_back(term);
    REQUIRE(primal_residual(state, m)[0] == 0.0);
  }

  SECTION("unit differences over four entries give 2") {
    Model m4;
    m4.num_conv_layers = 1;
    m4.layers.push_back(
        testutil::make_layer(Tensor4(testutil::conv_shape(4, 1, 1, 1), {1, 1, 1, 1})));
    AdmmState s4;
    AdmmTerm t4;
    t4.layer = 0;
    t4.sparsity = SparsityConstraint(GroupKind::Filter, 4);
    t4.z = Tensor4(m4.layers[0].weights.shape());  // zeros
    t4.u = Tensor4(m4.layers[0].weights.shape());
    s4.terms.push_back(t4);
    REQUIRE(primal_residual(s4, m4)[0] == Catch::Approx(2.0).epsilon(1e-15));
  }
}

TEST_CASE("fixed point: feasible W, U = 0, zero learning rate", "[admm]") {
  Model m = two_filter_model({3.0, 0.0});
  QuadraticProblem prob{{3.0, 1.0}};
  const std::vector<LayerConstraint> cs = {{0, SparsityConstraint(GroupKind::Filter, 1)}};
  AdmmState state = AdmmState::init(m, cs, std::nullopt, 1.0);

  AdmmSchedule sched;
  sched.admm_rounds = 1;
  sched.sgd_steps_per_round = 3;
  sched.learning_rate = 0.0;
  sched.rho_initial = 1.0;
  sched.rho_growth = 1.0;
  Rng rng(0);
  admm_round(m, state, prob, sched, 0, rng);
  REQUIRE(state.terms[0].z == m.layers[0].weights);
  for (std::size_t i = 0; i < state.terms[0].u.size(); ++i) {
    REQUIRE(state.terms[0].u[i] == 0.0);
  }
}

TEST_CASE("dual update identity holds after every round", "[admm][property]") {
  Rng rng(101);
  Model m;
  m.num_conv_layers = 1;
  m.layers.push_back(
      testutil::make_layer(testutil::random_tensor(testutil::conv_shape(4, 2, 2, 2), rng)));
  QuadraticProblem prob{std::vector<double>(m.layers[0].weights.size(), 0.5)};
  const std::vector<LayerConstraint> cs = {{0, SparsityConstraint(GroupKind::Kernel, 3)},
                                           {0, SparsityConstraint(GroupKind::Filter, 2)}};
  AdmmState state = AdmmState::init(m, cs, std::nullopt, 0.1);

  AdmmSchedule sched;
  sched.sgd_steps_per_round = 4;
  sched.learning_rate = 0.1;
  sched.rho_initial = 0.1;
  sched.rho_growth = 1.2;
  for (std::size_t round = 0; round < 5; ++round) {
    std::vector<Tensor4> u_before;
    for (const AdmmTerm& t : state.terms) u_before.push_back(t.u);
    admm_round(m, state, prob, sched, round, rng);
    for (std::size_t k = 0; k < state.terms.size(); ++k) {
      const AdmmTerm& t = state.terms[k];
      const Tensor4& w = m.layers[t.layer].weights;
      for (std::size_t i = 0; i < w.size(); ++i) {
        REQUIRE(t.u[i] == u_before[k][i] + w[i] - t.z[i]);  // exact, element-wise
      }
      REQUIRE(t.feasible(t.z));  // Z is produced only by projection
    }
  }
}

TEST_CASE("toy constrained least squares converges to the analytic optimum", "[admm]") {
  // minimize 1/2 ||w - (3, 1)||^2 subject to at most one nonzero filter;
  // the constrained minimizer is (3, 0)
  Model m = two_filter_model({0.5, 0.4});
  QuadraticProblem prob{{3.0, 1.0}};
  const std::vector<LayerConstraint> cs = {{0, SparsityConstraint(GroupKind::Filter, 1)}};

  AdmmSchedule sched;
  sched.admm_rounds = 40;
  sched.sgd_steps_per_round = 80;
  sched.learning_rate = 0.2;
  sched.lr_decay = 0.85;
  sched.rho_initial = 0.01;
  sched.rho_growth = 1.4;
  sched.seed = 4;

  Rng rng(sched.seed);
  AdmmState state = AdmmState::init(m, cs, std::nullopt, sched.rho_initial);
  std::vector<double> final_residuals;
  for (std::size_t round = 0; round < sched.admm_rounds; ++round) {
    final_residuals = admm_round(m, state, prob, sched, round, rng).residuals;
  }
  REQUIRE(final_residuals[0] < 1e-3);
  REQUIRE(m.layers[0].weights[0] == Catch::Approx(3.0).margin(0.05));
  REQUIRE(std::abs(m.layers[0].weights[1]) < 0.05);

  // masked retraining recovers the exact unconstrained minimum on the support
  Model retrained = masked_retrain(m, cs, prob, 8, 1.0, rng);
  REQUIRE(retrained.layers[0].weights[1] == 0.0);
  REQUIRE(retrained.layers[0].weights[0] == Catch::Approx(3.0).epsilon(1e-12));
  REQUIRE(is_feasible(retrained.layers[0].weights, cs[0].constraint));
}

TEST_CASE("masked retrain with zero steps only applies the mask", "[admm]") {
  Model m = two_filter_model({1.0, 2.0});
  QuadraticProblem prob{{1.0, 2.0}};
  const std::vector<LayerConstraint> cs = {{0, SparsityConstraint(GroupKind::Filter, 1)}};
  Rng rng(0);
  const Model out = masked_retrain(m, cs, prob, 0, 0.1, rng);
  REQUIRE(out.layers[0].weights[0] == 0.0);  // filter 1 carries the larger score
  REQUIRE(out.layers[0].weights[1] == 2.0);
}

TEST_CASE("mask that eliminates a whole layer aborts", "[admm]") {
  Model m = two_filter_model({0.0, 0.0});
  QuadraticProblem prob{{0.0, 0.0}};
  const std::vector<LayerConstraint> cs = {{0, SparsityConstraint(GroupKind::Filter, 1)}};
  Rng rng(0);
  REQUIRE_THROWS_WITH(masked_retrain(m, cs, prob, 0, 0.1, rng),
                      Catch::Matchers::ContainsSubstring("layer 0"));
}

TEST_CASE("divergence guard aborts with a diagnostic", "[admm]") {
  Model m = two_filter_model({1.0, 1.0});
  QuadraticProblem prob{{3.0, 1.0}};
  AdmmSchedule sched;
  sched.sgd_steps_per_round = 200;
  sched.learning_rate = 1e6;  // guaranteed blow-up on a quadratic
  Rng rng(0);
  AdmmState state = AdmmState::init(m, {}, std::nullopt, sched.rho_initial);
  REQUIRE_THROWS_WITH(admm_round(m, state, prob, sched, 0, rng),
                      Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("quantize_project maps to the nearest grid level", "[admm][quant]") {
  QuantSpec q;
  q.weight_bits = 2;  // signed: levels {-s, 0, s}
  q.frac_bits = 1;    // s = 0.5
  q.signed_weights = true;

  const LayerShape s1 = testutil::conv_shape(1, 1, 1, 1);
  SECTION("0.3 with step 0.5 rounds to 0.5") {
    REQUIRE(quantize_project(Tensor4(s1, {0.3}), q)[0] == 0.5);
  }
  SECTION("grid values are fixed points") {
    for (double v : {-0.5, 0.0, 0.5}) {
      REQUIRE(quantize_project(Tensor4(s1, {v}), q)[0] == v);
    }
  }
  SECTION("tie 0.25 rounds away from zero") {
    REQUIRE(quantize_project(Tensor4(s1, {0.25}), q)[0] == 0.5);
    REQUIRE(quantize_project(Tensor4(s1, {-0.25}), q)[0] == -0.5);
  }
  SECTION("out-of-range values clamp to the extreme level") {
    REQUIRE(quantize_project(Tensor4(s1, {9.0}), q)[0] == 0.5);
    REQUIRE(quantize_project(Tensor4(s1, {-9.0}), q)[0] == -0.5);
  }
  SECTION("zero maps to zero so pruning masks survive") {
    REQUIRE(quantize_project(Tensor4(s1, {0.0}), q)[0] == 0.0);
  }
}

TEST_CASE("quantization error is bounded by half a step", "[admm][quant][property]") {
  QuantSpec q;  // 8-bit, frac 6
  Rng rng(107);
  const double max_w = q.max_weight_value();
  for (int i = 0; i < 10000; ++i) {
    const double w = rng.uniform(-max_w, max_w);
    const Tensor4 t(testutil::conv_shape(1, 1, 1, 1), {w});
    const double pw = quantize_project(t, q)[0];
    REQUIRE(std::abs(w - pw) <= q.weight_step() / 2);
    REQUIRE(on_weight_grid(pw, q));
  }
  // the grid itself: symmetric, contains zero, 2^b - 1 levels
  const QuantConstraint qc(q);
  const auto grid = qc.grid();
  REQUIRE(grid.size() == (1u << q.weight_bits) - 1);
  REQUIRE(grid[grid.size() / 2] == 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    REQUIRE(grid[i] == -grid[grid.size() - 1 - i]);
  }
}

TEST_CASE("compress with no constraints retrains but keeps density", "[admm][compress]") {
  const Dataset data = make_synthetic_digits(80, 17);
  Rng rng(3);
  Model m = testutil::make_desk_model(rng);
  CnnProblem problem(data, make_network(m, 1, 16, 16), 16);

  CompressSettings settings;
  settings.schedule.admm_rounds = 2;
  settings.schedule.sgd_steps_per_round = 5;
  settings.schedule.learning_rate = 0.05;
  settings.retrain_steps = 5;

  const CompressResult result = compress(m, problem, settings);
  REQUIRE(result.report.conv_compression_rate == 1.0);
  REQUIRE(result.model.num_layers() == m.num_layers());
  REQUIRE(result.rounds.size() == 2);
}

TEST_CASE("compress output is feasible, on-grid and bit-identically reproducible",
          "[admm][compress]") {
  const Dataset data = make_synthetic_digits(120, 29);
  const std::vector<LayerConstraint> cs = {{0, SparsityConstraint(GroupKind::Kernel, 3)},
                                           {1, SparsityConstraint(GroupKind::Filter, 5)},
                                           {1, SparsityConstraint(GroupKind::Channel, 3)}};

  const auto run = [&]() {
    Rng rng(11);
    Model m = testutil::make_desk_model(rng, 4, 8);
    CnnProblem problem(data, make_network(m, 1, 16, 16), 16);
    CompressSettings settings;
    settings.constraints = cs;
    settings.quant = QuantSpec{};
    settings.schedule.admm_rounds = 3;
    settings.schedule.sgd_steps_per_round = 8;
    settings.schedule.learning_rate = 0.05;
    settings.schedule.seed = 555;
    settings.retrain_steps = 8;
    return compress(m, problem, settings);
  };

  const CompressResult a = run();
  for (const LayerConstraint& lc : cs) {
    REQUIRE(is_feasible(a.model.layers[lc.layer].weights, lc.constraint));
  }
  for (const LayerParams& layer : a.model.layers) {
    REQUIRE(layer.quant.has_value());
    REQUIRE(on_weight_grid(layer.weights, *layer.quant));
  }

  const CompressResult b = run();
  REQUIRE(a.model == b.model);  // bit-identical
}
