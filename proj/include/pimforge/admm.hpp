#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pimforge/model.hpp"
#include "pimforge/quantize.hpp"
#include "pimforge/rng.hpp"
#include "pimforge/sparsity.hpp"
#include "pimforge/trainer.hpp"

namespace pimforge {

// Anything that can hand out stochastic loss gradients: the CNN trainer in
// production, analytic toy objectives in tests.
template <class P>
concept TrainingProblem = requires(P p, const Model& m, std::size_t step, Gradients& g, Rng& rng) {
  { p.steps_per_epoch() } -> std::convertible_to<std::size_t>;
  p.start_epoch(rng);
  { p.loss_and_grad(m, step, g) } -> std::convertible_to<double>;
};

struct AdmmSchedule {
  std::size_t admm_rounds = 10;
  std::size_t sgd_steps_per_round = 1;
  double rho_initial = 1e-3;
  double rho_growth = 1.5;
  double learning_rate = 0.05;
  double lr_decay = 1.0;  // per-round multiplier in (0, 1]
  std::uint64_t seed = 0;

  void validate() const {
    if (admm_rounds < 1 || sgd_steps_per_round < 1) {
      throw ConfigError("schedule: round and step counts must be >= 1");
    }
    if (rho_initial <= 0.0) throw ConfigError("schedule: rho_initial must be positive");
    if (rho_growth < 1.0) throw ConfigError("schedule: rho_growth must be >= 1");
    // zero is allowed so that fixed-point checks can freeze the iterates
    if (learning_rate < 0.0) throw ConfigError("schedule: learning_rate must be non-negative");
    if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("schedule: lr_decay must be in (0, 1]");
  }
};

// A sparsity constraint attached to one layer of the model.
struct LayerConstraint {
  std::size_t layer = 0;
  SparsityConstraint constraint;

  bool operator==(const LayerConstraint&) const = default;
};

// One (Z, U, rho) triple. Quantization participates as one more term whose
// projection is quantize_project, mirroring the sparsity terms.
struct AdmmTerm {
  std::size_t layer = 0;
  bool is_quant = false;
  SparsityConstraint sparsity;
  QuantSpec quant;
  Tensor4 z;
  Tensor4 u;
  double rho = 0.0;

  Tensor4 project_onto(const Tensor4& w) const {
    return is_quant ? quantize_project(w, quant) : pimforge::project(w, sparsity);
  }
  bool feasible(const Tensor4& w) const {
    return is_quant ? on_weight_grid(w, quant) : is_feasible(w, sparsity);
  }
  std::string describe() const {
    if (is_quant) return "layer " + std::to_string(layer) + " quant";
    return "layer " + std::to_string(layer) + " " + group_kind_name(sparsity.kind) + " <= " +
           std::to_string(sparsity.budget);
  }
};

struct AdmmState {
  std::vector<AdmmTerm> terms;

  // Z starts at the projection of W (feasible by construction), U at zero.
  static AdmmState init(const Model& model, std::span<const LayerConstraint> constraints,
                        const std::optional<QuantSpec>& quant, double rho_initial) {
    AdmmState state;
    for (const LayerConstraint& lc : constraints) {
      if (lc.layer >= model.num_layers()) {
        throw ConfigError("constraint refers to layer " + std::to_string(lc.layer) +
                          " but the model has " + std::to_string(model.num_layers()) + " layers");
      }
      const Tensor4& w = model.layers[lc.layer].weights;
      try {
        lc.constraint.validate_for(w.shape());
      } catch (const Error& e) {
        throw ConfigError("layer " + std::to_string(lc.layer) + ": " + std::string(e.what()));
      }
      AdmmTerm term;
      term.layer = lc.layer;
      term.sparsity = lc.constraint;
      term.z = pimforge::project(w, lc.constraint);
      term.u = Tensor4(w.shape());
      term.rho = rho_initial;
      state.terms.push_back(std::move(term));
    }
    if (quant) {
      quant->validate();
      for (std::size_t i = 0; i < model.num_layers(); ++i) {
        AdmmTerm term;
        term.layer = i;
        term.is_quant = true;
        term.quant = *quant;
        term.z = quantize_project(model.layers[i].weights, *quant);
        term.u = Tensor4(model.layers[i].weights.shape());
        term.rho = rho_initial;
        state.terms.push_back(std::move(term));
      }
    }
    return state;
  }

  void check_shapes(const Model& model) const {
    for (const AdmmTerm& t : terms) {
      if (t.layer >= model.num_layers() ||
          t.z.shape() != model.layers[t.layer].weights.shape()) {
        throw ConfigError("ADMM state shape does not match model at " + t.describe());
      }
    }
  }
};

// Adds the quadratic penalty gradient rho * (W - Z + U) of every term to the
// matching layer's weight gradient. Bias gradients carry no penalty term.
inline void add_penalty_gradient(Gradients& grads, const Model& model, const AdmmState& state) {
  state.check_shapes(model);
  for (const AdmmTerm& t : state.terms) {
    const Tensor4& w = model.layers[t.layer].weights;
    std::vector<double>& gw = grads.weights[t.layer];
    for (std::size_t i = 0; i < w.size(); ++i) {
      gw[i] += t.rho * (w[i] - t.z[i] + t.u[i]);
    }
  }
}

// Gradient of the augmented loss of one batch: data gradient plus every
// term's penalty gradient.
template <TrainingProblem P>
double augmented_loss_gradient(const Model& model, P& problem, std::size_t step,
                               const AdmmState& state, Gradients& grads) {
  const double loss = problem.loss_and_grad(model, step, grads);
  add_penalty_gradient(grads, model, state);
  return loss;
}

// Frobenius norm of W - Z per term, in term order.
inline std::vector<double> primal_residual(const AdmmState& state, const Model& model) {
  state.check_shapes(model);
  std::vector<double> out;
  out.reserve(state.terms.size());
  for (const AdmmTerm& t : state.terms) {
    const Tensor4& w = model.layers[t.layer].weights;
    double acc = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double d = w[i] - t.z[i];
      acc += d * d;
    }
    out.push_back(std::sqrt(acc));
  }
  return out;
}

struct RoundLog {
  std::size_t round = 0;
  double mean_loss = 0.0;
  double learning_rate = 0.0;
  double rho = 0.0;
  std::vector<double> residuals;  // per term
};

// One ADMM round: sgd_steps_per_round SGD steps on the augmented loss, then
// Z := project(W + U) and U := U + W - Z for every term.
template <TrainingProblem P>
RoundLog admm_round(Model& model, AdmmState& state, P& problem, const AdmmSchedule& sched,
                    std::size_t round_index, Rng& rng) {
  sched.validate();
  state.check_shapes(model);
  const double lr = sched.learning_rate * std::pow(sched.lr_decay, static_cast<double>(round_index));
  const double rho = sched.rho_initial * std::pow(sched.rho_growth, static_cast<double>(round_index));
  for (AdmmTerm& t : state.terms) t.rho = rho;

  RoundLog log;
  log.round = round_index;
  log.learning_rate = lr;
  log.rho = rho;

  Gradients grads;
  double loss_sum = 0.0;
  const std::size_t per_epoch = std::max<std::size_t>(1, problem.steps_per_epoch());
  for (std::size_t step = 0; step < sched.sgd_steps_per_round; ++step) {
    if (step % per_epoch == 0) problem.start_epoch(rng);
    const double loss = augmented_loss_gradient(model, problem, step, state, grads);
    if (!std::isfinite(loss)) {
      throw Error("ADMM diverged: non-finite loss at round " + std::to_string(round_index) +
                  " step " + std::to_string(step) + "; reduce the learning rate");
    }
    loss_sum += loss;
    sgd_step(model, grads, lr);
  }
  log.mean_loss = loss_sum / static_cast<double>(sched.sgd_steps_per_round);

  for (AdmmTerm& t : state.terms) {
    const Tensor4& w = model.layers[t.layer].weights;
    Tensor4 shifted(w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) shifted[i] = w[i] + t.u[i];
    t.z = t.project_onto(shifted);
    for (std::size_t i = 0; i < w.size(); ++i) t.u[i] = t.u[i] + w[i] - t.z[i];
  }
  log.residuals = primal_residual(state, model);
  return log;
}

// Per-layer combined keep masks; layers without constraints keep everything.
inline std::vector<std::vector<std::uint8_t>> retrain_masks(
    const Model& model, std::span<const LayerConstraint> constraints) {
  std::vector<std::vector<std::uint8_t>> masks(model.num_layers());
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    std::vector<SparsityConstraint> own;
    for (const LayerConstraint& lc : constraints) {
      if (lc.layer == i) own.push_back(lc.constraint);
    }
    const Tensor4& w = model.layers[i].weights;
    masks[i] = own.empty() ? std::vector<std::uint8_t>(w.size(), 1) : combined_mask(w, own);
  }
  return masks;
}

// Hard-prunes via the combined mask of the final weights, then fine-tunes
// with the zeroed positions frozen. The result is exactly feasible for every
// constraint.
template <TrainingProblem P>
Model masked_retrain(Model model, std::span<const LayerConstraint> constraints, P& problem,
                     std::size_t steps, double learning_rate, Rng& rng) {
  const std::vector<std::vector<std::uint8_t>> masks = retrain_masks(model, constraints);
  for (std::size_t i = 0; i < model.num_layers(); ++i) {
    model.layers[i].weights = apply_mask(model.layers[i].weights, masks[i]);
  }
  for (const LayerConstraint& lc : constraints) {
    if (model.layers[lc.layer].weights.nonzero_count() == 0) {
      throw Error("mask eliminates layer " + std::to_string(lc.layer) +
                  " entirely; relax its constraints");
    }
  }
  Gradients grads;
  const std::size_t per_epoch = std::max<std::size_t>(1, problem.steps_per_epoch());
  for (std::size_t step = 0; step < steps; ++step) {
    if (step % per_epoch == 0) problem.start_epoch(rng);
    const double loss = problem.loss_and_grad(model, step, grads);
    if (!std::isfinite(loss)) {
      throw Error("retraining diverged: non-finite loss at step " + std::to_string(step));
    }
    sgd_step(model, grads, learning_rate, &masks);
  }
  for (const LayerConstraint& lc : constraints) {
    if (!is_feasible(model.layers[lc.layer].weights, lc.constraint)) {
      throw Error("postcondition violation: retrained model infeasible for " +
                  std::to_string(lc.layer));
    }
  }
  return model;
}

struct CompressSettings {
  std::vector<LayerConstraint> constraints;
  std::optional<QuantSpec> quant;
  AdmmSchedule schedule;
  std::size_t retrain_steps = 0;
};

struct CompressResult {
  Model model;
  std::vector<RoundLog> rounds;
  SparsityReport report;
};

// Full pipeline: ADMM rounds over pruning constraints (plus a quantization
// term per layer when enabled), masked retraining, then a final projection
// of the retained weights onto the quantization grid.
template <TrainingProblem P>
CompressResult compress(Model model, P& problem, const CompressSettings& settings,
                        const std::function<void(const RoundLog&, const Model&)>& on_round = {}) {
  model.validate();
  settings.schedule.validate();
  Rng rng(settings.schedule.seed);
  AdmmState state =
      AdmmState::init(model, settings.constraints, settings.quant, settings.schedule.rho_initial);

  CompressResult result;
  for (std::size_t round = 0; round < settings.schedule.admm_rounds; ++round) {
    RoundLog log = admm_round(model, state, problem, settings.schedule, round, rng);
    if (on_round) on_round(log, model);
    result.rounds.push_back(std::move(log));
  }

  const double retrain_lr =
      settings.schedule.learning_rate *
      std::pow(settings.schedule.lr_decay, static_cast<double>(settings.schedule.admm_rounds));
  model = masked_retrain(std::move(model), settings.constraints, problem, settings.retrain_steps,
                         retrain_lr, rng);

  if (settings.quant) {
    for (LayerParams& layer : model.layers) {
      layer.weights = quantize_project(layer.weights, *settings.quant);
      layer.quant = settings.quant;
    }
  }

  for (const LayerConstraint& lc : settings.constraints) {
    if (!is_feasible(model.layers[lc.layer].weights, lc.constraint)) {
      throw Error("postcondition violation: compressed model infeasible for layer " +
                  std::to_string(lc.layer));
    }
  }
  result.report = sparsity_report(model);
  result.model = std::move(model);
  return result;
}

}  // namespace pimforge
