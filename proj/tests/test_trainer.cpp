#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pimforge/bitserial.hpp"
#include "pimforge/quantize.hpp"
#include "pimforge/reference.hpp"
#include "pimforge/trainer.hpp"

#include "helpers.hpp"

using namespace pimforge;

namespace {

std::vector<double> collect_params(const Model& m) {
  std::vector<double> out;
  for (const LayerParams& layer : m.layers) {
    out.insert(out.end(), layer.weights.values().begin(), layer.weights.values().end());
    out.insert(out.end(), layer.biases.begin(), layer.biases.end());
  }
  return out;
}

void assign_params(Model& m, const std::vector<double>& params) {
  std::size_t k = 0;
  for (LayerParams& layer : m.layers) {
    for (double& v : layer.weights.values()) v = params[k++];
    for (double& v : layer.biases) v = params[k++];
  }
}

std::vector<double> collect_grads(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    out.insert(out.end(), g.weights[i].begin(), g.weights[i].end());
    out.insert(out.end(), g.biases[i].begin(), g.biases[i].end());
  }
  return out;
}

// 1x6x6 input -> conv 2@2x2 + pool -> conv 3@2x2 -> fc 4
Model tiny_two_conv_one_fc(Rng& rng) {
  Model m;
  m.num_conv_layers = 2;
  m.layers.push_back(
      testutil::make_layer(testutil::random_tensor(testutil::conv_shape(2, 1, 2, 2), rng, 0.5)));
  m.layers.push_back(
      testutil::make_layer(testutil::random_tensor(testutil::conv_shape(3, 2, 2, 2), rng, 0.5)));
  m.layers.push_back(
      testutil::make_layer(testutil::random_tensor(testutil::fc_shape(4, 3), rng, 0.5)));
  for (LayerParams& l : m.layers) {
    for (double& b : l.biases) b = 0.1 * rng.normal();
  }
  m.validate();
  return m;
}

}  // namespace

TEST_CASE("identity 1x1 conv copies the input", "[trainer]") {
  const Tensor4 w(testutil::conv_shape(1, 1, 1, 1), {1.0});
  const std::vector<double> bias = {0.0};
  Rng rng(61);
  Volume x(1, 3, 3);
  for (double& v : x.values) v = rng.normal();
  Volume out(1, 3, 3);
  detail::conv_forward(w, bias, x, 1, out);
  REQUIRE(out.values == x.values);
}

TEST_CASE("window sums: 2x2 kernel of ones on a 3x3 input", "[trainer]") {
  const Tensor4 w(testutil::conv_shape(1, 1, 2, 2), {1, 1, 1, 1});
  const std::vector<double> bias = {0.0};
  Volume x(1, 3, 3);
  for (std::size_t i = 0; i < 9; ++i) x.values[i] = static_cast<double>(i + 1);
  Volume out(1, 2, 2);
  detail::conv_forward(w, bias, x, 1, out);
  REQUIRE(out.at(0, 0, 0) == 1 + 2 + 4 + 5);
  REQUIRE(out.at(0, 0, 1) == 2 + 3 + 5 + 6);
  REQUIRE(out.at(0, 1, 0) == 4 + 5 + 7 + 8);
  REQUIRE(out.at(0, 1, 1) == 5 + 6 + 8 + 9);
}

TEST_CASE("all-zero parameters give zero logits and uniform loss", "[trainer]") {
  Rng rng(67);
  Model m = tiny_two_conv_one_fc(rng);
  for (LayerParams& l : m.layers) {
    for (double& v : l.weights.values()) v = 0.0;
    for (double& b : l.biases) b = 0.0;
  }
  const NetworkDef net = make_network(m, 1, 6, 6);
  Volume x(1, 6, 6);
  for (double& v : x.values) v = rng.uniform();
  const ForwardCache cache = forward(m, net, x);
  for (double logit : cache.logits) REQUIRE(logit == 0.0);

  TrainingBatch batch;
  batch.inputs.push_back(x);
  batch.labels.push_back(2);
  Gradients grads;
  const double loss = batch_loss_and_gradients(m, net, batch, grads);
  REQUIRE(loss == Catch::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences", "[trainer][property]") {
  Rng rng(71);
  Model m = tiny_two_conv_one_fc(rng);
  const NetworkDef net = make_network(m, 1, 6, 6);

  TrainingBatch batch;
  for (int s = 0; s < 3; ++s) {
    Volume x(1, 6, 6);
    for (double& v : x.values) v = rng.uniform();
    batch.inputs.push_back(x);
    batch.labels.push_back(static_cast<int>(rng.index(4)));
  }

  Gradients grads;
  batch_loss_and_gradients(m, net, batch, grads);
  const std::vector<double> analytic = collect_grads(grads);

  Model probe = m;
  const auto loss_fn = [&](const std::vector<double>& params) {
    assign_params(probe, params);
    Gradients scratch;
    return batch_loss_and_gradients(probe, net, batch, scratch);
  };
  const std::vector<double> numeric =
      reference::finite_difference_gradient(loss_fn, collect_params(m), 1e-5);

  REQUIRE(analytic.size() == numeric.size());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-7});
    REQUIRE(std::abs(analytic[i] - numeric[i]) / denom < 1e-4);
  }
}

TEST_CASE("duplicated sample leaves the mean gradient unchanged", "[trainer]") {
  Rng rng(73);
  Model m = tiny_two_conv_one_fc(rng);
  const NetworkDef net = make_network(m, 1, 6, 6);
  Volume x(1, 6, 6);
  for (double& v : x.values) v = rng.uniform();

  TrainingBatch single;
  single.inputs = {x};
  single.labels = {1};
  TrainingBatch doubled;
  doubled.inputs = {x, x};
  doubled.labels = {1, 1};

  Gradients g1, g2;
  const double l1 = batch_loss_and_gradients(m, net, single, g1);
  const double l2 = batch_loss_and_gradients(m, net, doubled, g2);
  REQUIRE(l1 == Catch::Approx(l2).epsilon(1e-15));
  const std::vector<double> v1 = collect_grads(g1);
  const std::vector<double> v2 = collect_grads(g2);
  for (std::size_t i = 0; i < v1.size(); ++i) {
    REQUIRE(v1[i] == Catch::Approx(v2[i]).margin(1e-15));
  }
}

TEST_CASE("zero input batch: FC weight gradient zero, bias gradient nonzero", "[trainer]") {
  Model m;
  m.num_conv_layers = 1;
  m.layers.push_back(testutil::make_layer(Tensor4(testutil::conv_shape(2, 1, 1, 1), {0.5, -0.5})));
  m.layers.push_back(
      testutil::make_layer(Tensor4(testutil::fc_shape(3, 2), {0.1, 0.2, 0.3, 0.4, 0.5, 0.6})));
  const NetworkDef net = make_network(m, 1, 1, 1);
  TrainingBatch batch;
  batch.inputs.push_back(Volume(1, 1, 1));  // all zeros
  batch.labels.push_back(0);
  Gradients grads;
  batch_loss_and_gradients(m, net, batch, grads);
  for (double g : grads.weights[1]) REQUIRE(g == 0.0);
  double bias_mass = 0.0;
  for (double g : grads.biases[1]) bias_mass += std::abs(g);
  REQUIRE(bias_mass > 0.0);
}

TEST_CASE("sgd_step arithmetic and masking", "[trainer]") {
  Model m;
  m.num_conv_layers = 1;
  m.layers.push_back(testutil::make_layer(Tensor4(testutil::conv_shape(2, 1, 1, 1), {1.0, 1.0})));
  Gradients g = Gradients::zeros_like(m);
  g.weights[0] = {0.5, 0.5};

  SECTION("lr = 0 leaves the model unchanged") {
    Model copy = m;
    sgd_step(copy, g, 0.0);
    REQUIRE(copy == m);
  }
  SECTION("all-false mask leaves the weights unchanged") {
    Model copy = m;
    std::vector<std::vector<std::uint8_t>> masks = {{0, 0}};
    sgd_step(copy, g, 0.1, &masks);
    REQUIRE(copy.layers[0].weights == m.layers[0].weights);
  }
  SECTION("w=1, g=0.5, lr=0.1 gives 0.95") {
    sgd_step(m, g, 0.1);
    REQUIRE(m.layers[0].weights[0] == Catch::Approx(0.95).epsilon(1e-15));
  }
}

TEST_CASE("masked positions stay exactly zero through training", "[trainer][property]") {
  Rng rng(79);
  Model m = testutil::make_desk_model(rng);
  const NetworkDef net = make_network(m, 1, 16, 16);
  std::vector<std::vector<std::uint8_t>> masks;
  for (LayerParams& l : m.layers) {
    std::vector<std::uint8_t> mask(l.weights.size(), 1);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (rng.uniform() < 0.4) {
        mask[i] = 0;
        l.weights[i] = 0.0;
      }
    }
    masks.push_back(mask);
  }
  const Dataset data = make_synthetic_digits(32, 99);
  CnnProblem problem(data, net, 8);
  Rng epoch_rng(5);
  Gradients grads;
  for (std::size_t step = 0; step < 8; ++step) {
    if (step % problem.steps_per_epoch() == 0) problem.start_epoch(epoch_rng);
    problem.loss_and_grad(m, step, grads);
    sgd_step(m, grads, 0.05, &masks);
  }
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    for (std::size_t i = 0; i < masks[li].size(); ++i) {
      if (!masks[li][i]) REQUIRE(m.layers[li].weights[i] == 0.0);
    }
  }
}

TEST_CASE("constant predictor scores 1/k on a balanced set", "[trainer]") {
  Model m;
  m.num_conv_layers = 1;
  m.layers.push_back(testutil::make_layer(Tensor4(testutil::conv_shape(2, 1, 2, 2))));
  m.layers.push_back(testutil::make_layer(Tensor4(testutil::fc_shape(10, 2))));
  m.layers[1].biases[3] = 1.0;  // class 3 always wins
  const NetworkDef net = make_network(m, 1, 3, 3);

  Dataset balanced;
  balanced.channels = 1;
  balanced.height = balanced.width = 3;
  balanced.num_classes = 10;
  for (int cls = 0; cls < 10; ++cls) {
    for (int rep = 0; rep < 3; ++rep) {
      for (int p = 0; p < 9; ++p) balanced.pixels.push_back(0.1 * p);
      balanced.labels.push_back(cls);
    }
  }
  REQUIRE(evaluate(m, net, balanced) == Catch::Approx(0.10));
}

TEST_CASE("overfitting a single sample reaches accuracy 1.0", "[trainer]") {
  Rng rng(83);
  Model m = tiny_two_conv_one_fc(rng);
  const NetworkDef net = make_network(m, 1, 6, 6);
  Dataset one;
  one.channels = 1;
  one.height = one.width = 6;
  one.num_classes = 4;
  for (int p = 0; p < 36; ++p) one.pixels.push_back(rng.uniform());
  one.labels.push_back(2);

  CnnProblem problem(one, net, 1);
  Rng epoch_rng(1);
  Gradients grads;
  double loss = 1.0;
  for (int step = 0; step < 400 && loss >= 1e-3; ++step) {
    problem.start_epoch(epoch_rng);
    loss = problem.loss_and_grad(m, static_cast<std::size_t>(step), grads);
    sgd_step(m, grads, 0.5);
  }
  REQUIRE(loss < 1e-3);
  REQUIRE(evaluate(m, net, one) == 1.0);
}

TEST_CASE("training trajectory is bit-identical for a fixed seed", "[trainer]") {
  const Dataset data = make_synthetic_digits(64, 123);
  auto train = [&]() {
    Rng rng(2024);
    Model m = testutil::make_desk_model(rng);
    const NetworkDef net = make_network(m, 1, 16, 16);
    CnnProblem problem(data, net, 16);
    Rng epoch_rng(77);
    Gradients grads;
    for (std::size_t step = 0; step < 12; ++step) {
      if (step % problem.steps_per_epoch() == 0) problem.start_epoch(epoch_rng);
      problem.loss_and_grad(m, step, grads);
      sgd_step(m, grads, 0.05);
    }
    return m;
  };
  REQUIRE(train() == train());
}

TEST_CASE("parallel evaluation matches sequential exactly", "[trainer]") {
  Rng rng(87);
  const Model m = testutil::make_desk_model(rng);
  const NetworkDef net = make_network(m, 1, 16, 16);
  const Dataset data = make_synthetic_digits(50, 7);
  REQUIRE(evaluate(m, net, data, 1) == evaluate(m, net, data, 4));
}

TEST_CASE("real forward on grid operands equals the rescaled bit-serial result",
          "[trainer][bitserial]") {
  Rng rng(91);
  QuantSpec q;

  const LayerShape shape = testutil::conv_shape(3, 2, 2, 2);
  const Tensor4 w_q = quantize_project(testutil::random_tensor(shape, rng, 0.4), q);
  Volume x(2, 5, 5);
  for (double& v : x.values) v = rng.uniform();
  const IntVolume x_int = quantize_input(x, q);
  const Volume x_q = dequantize_input(x_int, q);

  // real path: double-precision cross-correlation of the grid values
  Volume real_out(3, 4, 4);
  const std::vector<double> no_bias(3, 0.0);
  detail::conv_forward(w_q, no_bias, x_q, 1, real_out);

  // integer path, rescaled by the two binary points
  const IntTensor4 levels = weight_levels(w_q, q);
  const IntVolume int_out =
      bitwise_conv2d(x_int, levels, 1, q.input_bits, q.weight_mag_bits(), true);
  const double scale = std::ldexp(1.0, -static_cast<int>(q.frac_bits + q.input_frac_bits));
  for (std::size_t i = 0; i < real_out.values.size(); ++i) {
    const double rescaled = static_cast<double>(int_out.values[i]) * scale;
    REQUIRE(real_out.values[i] == Catch::Approx(rescaled).epsilon(1e-12).margin(0));
  }
}
