#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "activelex/features.hpp"

namespace activelex {

/// Multinomial logistic regression parameters.
///
/// Parameters are stored flat: `classes.size()` weight rows of length
/// `dimension`, followed by one bias per class.
struct ModelState {
  std::vector<std::string> classes;
  std::size_t dimension = 0;
  double l2_strength = 1e-2;
  std::vector<double> params;

  static ModelState zeros(std::vector<std::string> classes, std::size_t dimension, double l2_strength);

  std::size_t num_classes() const { return classes.size(); }
  std::span<const double> weights(std::size_t c) const { return {params.data() + c * dimension, dimension}; }
  std::span<double> weights(std::size_t c) { return {params.data() + c * dimension, dimension}; }
  std::span<const double> all_weights() const { return {params.data(), classes.size() * dimension}; }
  std::span<const double> bias() const { return {params.data() + classes.size() * dimension, classes.size()}; }
  std::span<double> bias() { return {params.data() + classes.size() * dimension, classes.size()}; }

  bool operator==(const ModelState&) const = default;
};

struct LabeledVector {
  SparseVector x;
  std::size_t label = 0;
};

struct TrainConfig {
  std::size_t max_iterations = 500;
  double gradient_tolerance = 1e-6;
  double l2_strength = 1e-2;
  bool warm_start = true;
  std::size_t lbfgs_history = 10;
};

struct TrainReport {
  std::size_t iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;  // infinity norm at exit
  std::vector<double> loss_trace;  // objective at the start and after every accepted step
};

/// Class logits w_c·x + b_c.
std::vector<double> logits(const ModelState& model, const SparseVector& x);
/// Softmax probabilities; throws DimensionMismatch when x.dimension() != model.dimension.
std::vector<double> predict_proba(const ModelState& model, const SparseVector& x);
/// Index of the most probable class (lowest index on ties).
std::size_t argmax(std::span<const double> values);
std::size_t predict(const ModelState& model, const SparseVector& x);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as ModelState::params
};

/// Mean cross-entropy plus (λ/2)·‖W‖² (bias unregularized) and its exact gradient.
LossGradient loss_and_gradient(const ModelState& model, std::span<const LabeledVector> batch);

/// Full-batch L-BFGS with Armijo backtracking.
///
/// The batch is put into a canonical content order before summation, so the
/// result does not depend on the order of `data`. With `config.warm_start`
/// and a non-null `initial`, optimization starts from `initial`; otherwise
/// from zeros.
ModelState train(std::span<const LabeledVector> data, const std::vector<std::string>& classes, std::size_t dimension,
                 const TrainConfig& config, const ModelState* initial = nullptr, TrainReport* report = nullptr);

struct L2Selection {
  double best = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_scores;  // mean held-out micro-F1 per grid value
  bool stratified = true;
};

inline const std::vector<double> kDefaultL2Grid = {1e-4, 1e-3, 1e-2, 1e-1, 1.0};

/// k-fold cross-validated choice of λ maximizing mean held-out micro-F1.
/// Ties go to the larger λ. Falls back to plain folds when some class has
/// fewer members than `folds`.
L2Selection select_l2(std::span<const LabeledVector> data, const std::vector<std::string>& classes,
                      std::size_t dimension, std::span<const double> grid, std::size_t folds, std::uint64_t seed,
                      const TrainConfig& base = {});

/// Self-describing JSON: classes, dimension, hash id, hash_dims, lexicon
/// category order, λ, and the nonzero weights per class.
nlohmann::json model_to_json(const ModelState& model, const FeatureSpace& space);

struct PersistedModel {
  ModelState model;
  FeatureSpace space;
};

/// Inverse of model_to_json. Verifies the hash function id and dimension.
PersistedModel model_from_json(const nlohmann::json& doc);

}  // namespace activelex
