#include "activelex/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>

#include "activelex/error.hpp"
#include "activelex/kernels/kernels.hpp"
#include "activelex/metrics.hpp"
#include "activelex/rng.hpp"

namespace activelex {

namespace kn = kernels;

ModelState ModelState::zeros(std::vector<std::string> classes, std::size_t dimension, double l2_strength) {
  ModelState m;
  m.dimension = dimension;
  m.l2_strength = l2_strength;
  m.params.assign(classes.size() * dimension + classes.size(), 0.0);
  m.classes = std::move(classes);
  return m;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

namespace {

void check_dimension(const ModelState& model, const SparseVector& x) {
  if (x.dimension() != model.dimension)
    throw DimensionMismatch("vector dimension " + std::to_string(x.dimension()) + " != model dimension " +
                            std::to_string(model.dimension));
}

/// Max-subtracted softmax in place; returns log-sum-exp of the input.
double softmax_inplace(std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    total += v;
  }
  for (double& v : z) v = std::max(v / total, std::numeric_limits<double>::min());
  return m + std::log(total);
}

/// Objective over a (possibly compacted) feature space with params laid out
/// as [W (classes × dim), b (classes)].
struct Problem {
  std::size_t classes = 0;
  std::size_t dim = 0;
  double l2 = 0.0;
  std::vector<SparseVector> xs;
  std::vector<std::size_t> labels;

  std::size_t size() const { return classes * dim + classes; }

  double evaluate(std::span<const double> params, std::span<double> grad) const {
    std::fill(grad.begin(), grad.end(), 0.0);
    const double* bias = params.data() + classes * dim;
    double* grad_bias = grad.data() + classes * dim;
    std::vector<double> z(classes);
    double loss = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const auto& x = xs[i];
      const auto idx = x.indices();
      const auto val = x.values();
      for (std::size_t c = 0; c < classes; ++c)
        z[c] = kn::sparse_dot(idx, val, params.subspan(c * dim, dim)) + bias[c];
      const double gold_logit = z[labels[i]];
      const double m = *std::max_element(z.begin(), z.end());
      double total = 0.0;
      for (std::size_t c = 0; c < classes; ++c) total += std::exp(z[c] - m);
      const double lse = m + std::log(total);
      loss += lse - gold_logit;
      for (std::size_t c = 0; c < classes; ++c) {
        const double r = std::exp(z[c] - lse) - (c == labels[i] ? 1.0 : 0.0);
        double* row = grad.data() + c * dim;
        for (std::size_t k = 0; k < idx.size(); ++k) row[idx[k]] += r * val[k];
        grad_bias[c] += r;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(xs.size());
    loss *= inv_n;
    kn::scale(inv_n, grad);
    const auto weights = params.first(classes * dim);
    loss += 0.5 * l2 * kn::sum_squares(weights);
    kn::axpy(l2, weights, grad.first(classes * dim));
    return loss;
  }
};

void validate_batch(std::span<const LabeledVector> data, std::size_t classes, std::size_t dimension) {
  for (const auto& ex : data) {
    if (ex.x.dimension() != dimension)
      throw DimensionMismatch("example dimension " + std::to_string(ex.x.dimension()) + " != " +
                              std::to_string(dimension));
    if (ex.label >= classes) throw InvalidArgument("class index " + std::to_string(ex.label) + " out of range");
  }
}

struct LbfgsResult {
  std::size_t iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
};

LbfgsResult minimize(const Problem& problem, std::vector<double>& x, const TrainConfig& config,
                     std::vector<double>& trace) {
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;
  const std::size_t n = x.size();
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  double f = problem.evaluate(x, g);
  trace.push_back(f);
  LbfgsResult result;
  result.gradient_norm = kn::max_abs(g);
  if (result.gradient_norm <= config.gradient_tolerance) {
    result.converged = true;
    return result;
  }

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  std::vector<double> alpha;

  while (result.iterations < config.max_iterations) {
    // Two-loop recursion: d = -H g.
    std::copy(g.begin(), g.end(), d.begin());
    alpha.assign(memory.size(), 0.0);
    for (std::size_t k = memory.size(); k-- > 0;) {
      alpha[k] = memory[k].rho * kn::dot(memory[k].s, d);
      kn::axpy(-alpha[k], memory[k].y, d);
    }
    if (!memory.empty()) {
      const auto& last = memory.back();
      kn::scale(kn::dot(last.s, last.y) / kn::dot(last.y, last.y), d);
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const double beta = memory[k].rho * kn::dot(memory[k].y, d);
      kn::axpy(alpha[k] - beta, memory[k].s, d);
    }
    kn::scale(-1.0, d);

    double slope = kn::dot(g, d);
    if (!(slope < 0.0)) {
      memory.clear();
      std::copy(g.begin(), g.end(), d.begin());
      kn::scale(-1.0, d);
      slope = kn::dot(g, d);
    }
    double step = memory.empty() ? 1.0 / std::max(1.0, std::sqrt(kn::sum_squares(g))) : 1.0;

    bool accepted = false;
    double f_new = f;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      std::copy(x.begin(), x.end(), x_new.begin());
      kn::axpy(step, d, x_new);
      f_new = problem.evaluate(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (memory.empty()) break;  // steepest descent cannot make progress either
      memory.clear();
      continue;
    }

    Pair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      pair.s[i] = x_new[i] - x[i];
      pair.y[i] = g_new[i] - g[i];
    }
    const double sy = kn::dot(pair.s, pair.y);
    if (sy > 1e-12 * std::sqrt(kn::sum_squares(pair.s) * kn::sum_squares(pair.y))) {
      pair.rho = 1.0 / sy;
      memory.push_back(std::move(pair));
      if (memory.size() > std::max<std::size_t>(config.lbfgs_history, 1)) memory.pop_front();
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    trace.push_back(f);
    ++result.iterations;
    result.gradient_norm = kn::max_abs(g);
    if (result.gradient_norm <= config.gradient_tolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace

std::vector<double> logits(const ModelState& model, const SparseVector& x) {
  check_dimension(model, x);
  std::vector<double> z(model.num_classes());
  const auto b = model.bias();
  for (std::size_t c = 0; c < z.size(); ++c) z[c] = kn::sparse_dot(x.indices(), x.values(), model.weights(c)) + b[c];
  return z;
}

std::vector<double> predict_proba(const ModelState& model, const SparseVector& x) {
  auto z = logits(model, x);
  softmax_inplace(z);
  return z;
}

std::size_t predict(const ModelState& model, const SparseVector& x) { return argmax(logits(model, x)); }

LossGradient loss_and_gradient(const ModelState& model, std::span<const LabeledVector> batch) {
  if (batch.empty()) throw InvalidArgument("loss_and_gradient: empty batch");
  validate_batch(batch, model.num_classes(), model.dimension);
  Problem problem;
  problem.classes = model.num_classes();
  problem.dim = model.dimension;
  problem.l2 = model.l2_strength;
  for (const auto& ex : batch) {
    problem.xs.push_back(ex.x);
    problem.labels.push_back(ex.label);
  }
  LossGradient out;
  out.gradient.assign(problem.size(), 0.0);
  out.loss = problem.evaluate(model.params, out.gradient);
  return out;
}

ModelState train(std::span<const LabeledVector> data, const std::vector<std::string>& classes, std::size_t dimension,
                 const TrainConfig& config, const ModelState* initial, TrainReport* report) {
  if (data.empty()) throw InvalidArgument("train: no training data");
  if (classes.size() < 2) throw InvalidArgument("train: need at least 2 classes");
  if (config.max_iterations < 1) throw InvalidArgument("train: max_iterations must be >= 1");
  if (!(config.gradient_tolerance > 0.0)) throw InvalidArgument("train: gradient_tolerance must be positive");
  if (!(config.l2_strength >= 0.0)) throw InvalidArgument("train: l2_strength must be non-negative");
  validate_batch(data, classes.size(), dimension);
  {
    std::set<std::size_t> seen;
    for (const auto& ex : data) seen.insert(ex.label);
    if (seen.size() < 2) throw InvalidArgument("fewer than 2 classes observed");
  }
  const ModelState* warm = config.warm_start ? initial : nullptr;
  if (warm) {
    if (warm->dimension != dimension) throw DimensionMismatch("warm start model has a different dimension");
    if (warm->classes != classes) throw DimensionMismatch("warm start model has different classes");
  }

  // Canonical order makes the summation independent of the caller's order.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (data[a].label != data[b].label) return data[a].label < data[b].label;
    return data[a].x.compare(data[b].x) < 0;
  });

  // Coordinates that never appear in the data and start at zero stay at zero,
  // so only the active set is optimized.
  const std::size_t C = classes.size();
  std::vector<std::uint32_t> active;
  for (const auto& ex : data) active.insert(active.end(), ex.x.indices().begin(), ex.x.indices().end());
  if (warm) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto w = warm->weights(c);
      for (std::size_t j = 0; j < dimension; ++j)
        if (w[j] != 0.0) active.push_back(static_cast<std::uint32_t>(j));
    }
  }
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  auto compact_index = [&](std::uint32_t j) {
    return static_cast<std::uint32_t>(std::lower_bound(active.begin(), active.end(), j) - active.begin());
  };

  Problem problem;
  problem.classes = C;
  problem.dim = active.size();
  problem.l2 = config.l2_strength;
  problem.xs.reserve(data.size());
  for (std::size_t i : order) {
    const auto& x = data[i].x;
    std::vector<std::pair<std::uint32_t, double>> pairs;
    pairs.reserve(x.nnz());
    for (std::size_t k = 0; k < x.nnz(); ++k) pairs.emplace_back(compact_index(x.indices()[k]), x.values()[k]);
    problem.xs.push_back(SparseVector::from_pairs(active.size(), std::move(pairs)));
    problem.labels.push_back(data[i].label);
  }

  std::vector<double> params(problem.size(), 0.0);
  if (warm) {
    for (std::size_t c = 0; c < C; ++c) {
      const auto w = warm->weights(c);
      for (std::size_t k = 0; k < active.size(); ++k) params[c * active.size() + k] = w[active[k]];
      params[C * active.size() + c] = warm->bias()[c];
    }
  }

  TrainReport local;
  const auto result = minimize(problem, params, config, local.loss_trace);
  local.iterations = result.iterations;
  local.converged = result.converged;
  local.gradient_norm = result.gradient_norm;

  ModelState model = ModelState::zeros(classes, dimension, config.l2_strength);
  for (std::size_t c = 0; c < C; ++c) {
    auto w = model.weights(c);
    for (std::size_t k = 0; k < active.size(); ++k) w[active[k]] = params[c * active.size() + k];
    model.bias()[c] = params[C * active.size() + c];
  }
  if (report) *report = std::move(local);
  return model;
}

// ---------------------------------------------------------------------------
// Cross-validated λ selection
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> assign_folds(std::span<const LabeledVector> data, std::size_t classes, std::size_t folds,
                                      std::uint64_t seed, bool& stratified) {
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);
  stratified = std::all_of(by_class.begin(), by_class.end(),
                           [&](const auto& members) { return members.empty() || members.size() >= folds; });
  auto shuffle = [&](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };
  std::vector<std::size_t> fold_of(data.size());
  if (stratified) {
    std::size_t offset = 0;
    for (auto& members : by_class) {
      shuffle(members);
      for (std::size_t k = 0; k < members.size(); ++k) fold_of[members[k]] = (offset + k) % folds;
      offset += members.size();
    }
  } else {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    shuffle(all);
    for (std::size_t k = 0; k < all.size(); ++k) fold_of[all[k]] = k % folds;
  }
  return fold_of;
}

}  // namespace

L2Selection select_l2(std::span<const LabeledVector> data, const std::vector<std::string>& classes,
                      std::size_t dimension, std::span<const double> grid, std::size_t folds, std::uint64_t seed,
                      const TrainConfig& base) {
  if (grid.empty()) throw InvalidArgument("select_l2: empty grid");
  if (folds < 2) throw InvalidArgument("select_l2: need at least 2 folds");
  if (data.size() < folds) throw InvalidArgument("select_l2: fewer examples than folds");
  validate_batch(data, classes.size(), dimension);

  L2Selection out;
  out.grid.assign(grid.begin(), grid.end());
  if (grid.size() == 1) {
    out.best = grid.front();
    out.mean_scores.assign(1, 0.0);
  }
  const auto fold_of = assign_folds(data, classes.size(), folds, seed, out.stratified);
  if (grid.size() == 1) return out;

  for (double lambda : grid) {
    TrainConfig cfg = base;
    cfg.l2_strength = lambda;
    cfg.warm_start = false;
    double total = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
      std::vector<LabeledVector> train_part, held_out;
      for (std::size_t i = 0; i < data.size(); ++i) (fold_of[i] == f ? held_out : train_part).push_back(data[i]);
      if (held_out.empty()) continue;
      std::set<std::size_t> seen;
      for (const auto& ex : train_part) seen.insert(ex.label);
      std::vector<std::size_t> preds, golds;
      if (seen.size() >= 2) {
        const auto model = train(train_part, classes, dimension, cfg);
        for (const auto& ex : held_out) preds.push_back(predict(model, ex.x));
      } else {
        // A fold whose training part holds one class can only predict that class.
        const std::size_t only = train_part.empty() ? 0 : *seen.begin();
        preds.assign(held_out.size(), only);
      }
      for (const auto& ex : held_out) golds.push_back(ex.label);
      total += micro_f1(preds, golds);
    }
    out.mean_scores.push_back(total / static_cast<double>(folds));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double s = out.mean_scores[i], b = out.mean_scores[best];
    if (s > b || (s == b && grid[i] > grid[best])) best = i;
  }
  out.best = grid[best];
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

nlohmann::json model_to_json(const ModelState& model, const FeatureSpace& space) {
  if (space.dimension() != model.dimension) throw DimensionMismatch("model and feature space dimensions differ");
  nlohmann::json weights = nlohmann::json::array();
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    nlohmann::json row = nlohmann::json::array();
    const auto w = model.weights(c);
    for (std::size_t j = 0; j < w.size(); ++j)
      if (w[j] != 0.0) row.push_back({j, w[j]});
    weights.push_back(std::move(row));
  }
  return {{"format", "activelex-model"},
          {"version", 1},
          {"hash_function", std::string(kHashFunctionId)},
          {"hash_dims", space.hash_dims()},
          {"lexicon_categories", space.lexicon_categories()},
          {"classes", model.classes},
          {"dimension", model.dimension},
          {"l2_strength", model.l2_strength},
          {"bias", std::vector<double>(model.bias().begin(), model.bias().end())},
          {"weights", std::move(weights)}};
}

PersistedModel model_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "activelex-model") throw DataError("not an activelex model file");
    if (doc.at("hash_function").get<std::string>() != kHashFunctionId)
      throw DataError("model uses hash function \"" + doc.at("hash_function").get<std::string>() + "\", expected " +
                      std::string(kHashFunctionId));
    FeatureSpace space(doc.at("hash_dims").get<std::size_t>(),
                       doc.at("lexicon_categories").get<std::vector<std::string>>());
    const auto dimension = doc.at("dimension").get<std::size_t>();
    if (dimension != space.dimension())
      throw DataError("model dimension " + std::to_string(dimension) + " does not match its feature space (" +
                      std::to_string(space.dimension()) + ")");
    auto model = ModelState::zeros(doc.at("classes").get<std::vector<std::string>>(), dimension,
                                   doc.at("l2_strength").get<double>());
    if (model.num_classes() < 2) throw DataError("model needs at least 2 classes");
    const auto bias = doc.at("bias").get<std::vector<double>>();
    const auto& weights = doc.at("weights");
    if (bias.size() != model.num_classes() || weights.size() != model.num_classes())
      throw DataError("model bias/weights do not match the class count");
    std::copy(bias.begin(), bias.end(), model.bias().begin());
    for (std::size_t c = 0; c < model.num_classes(); ++c) {
      auto w = model.weights(c);
      for (const auto& entry : weights[c]) {
        const auto j = entry.at(0).get<std::size_t>();
        if (j >= dimension) throw DataError("weight index out of range");
        w[j] = entry.at(1).get<double>();
      }
    }
    return {std::move(model), std::move(space)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model: ") + e.what());
  }
}

}  // namespace activelex
