#include "activelex/engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "activelex/error.hpp"
#include "activelex/metrics.hpp"

namespace activelex {

using nlohmann::json;

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::seed: return "seed";
    case Provenance::human: return "human";
    case Provenance::model_accepted: return "model_accepted";
  }
  return "seed";
}

std::optional<Provenance> parse_provenance(std::string_view name) {
  if (name == "seed") return Provenance::seed;
  if (name == "human") return Provenance::human;
  if (name == "model_accepted") return Provenance::model_accepted;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Metrics rows
// ---------------------------------------------------------------------------

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

std::string metrics_csv_row(const RoundMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  std::string row = std::to_string(m.round) + ',' + std::to_string(m.n_labeled) + ',' + std::to_string(m.n_remaining) +
                    ',' + format_double(m.fraction_used);
  for (const auto* v : {&m.f1_test, &m.f1_dev, &m.f1_train, &m.f1_remaining}) row += ',' + opt(*v);
  return row;
}

std::string metrics_to_csv(std::span<const RoundMetrics> history) {
  std::string out(kMetricsCsvHeader);
  out += '\n';
  for (const auto& m : history) {
    out += metrics_csv_row(m);
    out += '\n';
  }
  return out;
}

json metrics_to_json(const RoundMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"round", m.round},
          {"n_labeled", m.n_labeled},
          {"n_remaining", m.n_remaining},
          {"fraction_used", m.fraction_used},
          {"f1_test", opt(m.f1_test)},
          {"f1_dev", opt(m.f1_dev)},
          {"f1_train", opt(m.f1_train)},
          {"f1_remaining", opt(m.f1_remaining)}};
}

RoundMetrics metrics_from_json(const json& j) {
  auto opt = [&](const char* key) -> std::optional<double> {
    const auto& v = j.at(key);
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  RoundMetrics m;
  m.round = j.at("round").get<std::size_t>();
  m.n_labeled = j.at("n_labeled").get<std::size_t>();
  m.n_remaining = j.at("n_remaining").get<std::size_t>();
  m.fraction_used = j.at("fraction_used").get<double>();
  m.f1_test = opt("f1_test");
  m.f1_dev = opt("f1_dev");
  m.f1_train = opt("f1_train");
  m.f1_remaining = opt("f1_remaining");
  return m;
}

// ---------------------------------------------------------------------------
// Annotator
// ---------------------------------------------------------------------------

std::optional<AnnotatorPolicy> parse_policy(std::string_view text) {
  if (text == "oracle") return AnnotatorPolicy{};
  constexpr std::string_view prefix = "confidence:";
  if (!text.starts_with(prefix)) return std::nullopt;
  const auto value = text.substr(prefix.size());
  double tau = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), tau);
  if (ec != std::errc() || ptr != value.data() + value.size() || !(tau >= 0.0) || !std::isfinite(tau))
    return std::nullopt;
  return AnnotatorPolicy{AnnotatorPolicy::Mode::confidence_accept, tau};
}

std::string policy_name(const AnnotatorPolicy& policy) {
  if (policy.mode == AnnotatorPolicy::Mode::oracle) return "oracle";
  return "confidence:" + format_double(policy.tau);
}

std::pair<std::string, Provenance> annotate_simulated(std::string_view predicted_label,
                                                      std::span<const double> probabilities, std::string_view gold,
                                                      const AnnotatorPolicy& policy) {
  if (policy.mode == AnnotatorPolicy::Mode::confidence_accept && !probabilities.empty()) {
    const double top = *std::max_element(probabilities.begin(), probabilities.end());
    if (top >= policy.tau) return {std::string(predicted_label), Provenance::model_accepted};
  }
  return {std::string(gold), Provenance::human};
}

// ---------------------------------------------------------------------------
// Session plumbing
// ---------------------------------------------------------------------------

std::vector<std::string> SessionState::remaining_ids() const {
  std::vector<std::string> ids;
  ids.reserve(pool_remaining.size());
  for (auto i : pool_remaining) ids.push_back(train_instance(i).id);
  return ids;
}

bool SessionState::is_remaining(std::string_view instance_id) const {
  auto it = train_index.find(instance_id);
  return it != train_index.end() && std::binary_search(pool_remaining.begin(), pool_remaining.end(), it->second);
}

namespace {

std::vector<TokenStream> tokenize_split(const std::vector<Instance>& instances) {
  std::vector<TokenStream> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(tokenize(inst.text));
  return out;
}

void tokenize_all(SessionState& state) {
  state.train_tokens = tokenize_split(state.dataset->split(Split::train));
  state.dev_tokens = tokenize_split(state.dataset->split(Split::dev));
  state.test_tokens = tokenize_split(state.dataset->split(Split::test));
  state.train_index.clear();
  const auto& train = state.dataset->split(Split::train);
  for (std::size_t i = 0; i < train.size(); ++i) state.train_index.emplace(train[i].id, i);
}

void refeaturize(SessionState& state) {
  const Featurizer featurizer(state.space, state.lexicon, state.filter, state.config.featurize);
  auto run = [&](const std::vector<TokenStream>& tokens) {
    std::vector<SparseVector> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(featurizer(t));
    return out;
  };
  state.train_vectors = run(state.train_tokens);
  state.dev_vectors = run(state.dev_tokens);
  state.test_vectors = run(state.test_tokens);
}

std::size_t class_of(const SessionState& state, std::string_view label) {
  auto idx = state.dataset->label_index(label);
  if (!idx) throw InvalidArgument("label \"" + std::string(label) + "\" is not in the label set");
  return *idx;
}

std::vector<LabeledVector> training_batch(const SessionState& state) {
  std::vector<LabeledVector> batch;
  batch.reserve(state.labeled.size());
  for (const auto& item : state.labeled)
    batch.push_back({state.train_vectors[state.train_index.find(item.instance_id)->second],
                     class_of(state, item.label)});
  return batch;
}

double choose_l2(const SessionState& state, std::span<const LabeledVector> batch, std::uint64_t seed) {
  const auto& cfg = state.config;
  if (cfg.l2_grid.empty() || batch.size() < cfg.cv_folds || cfg.cv_folds < 2) return cfg.train.l2_strength;
  return select_l2(batch, state.dataset->label_set, state.space.dimension(), cfg.l2_grid, cfg.cv_folds, seed,
                   cfg.train)
      .best;
}

std::optional<double> split_f1(const SessionState& state, const std::vector<Instance>& instances,
                               const std::vector<SparseVector>& vectors) {
  std::vector<std::size_t> preds, golds;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!instances[i].gold_label) continue;
    preds.push_back(predict(state.model, vectors[i]));
    golds.push_back(class_of(state, *instances[i].gold_label));
  }
  if (preds.empty()) return std::nullopt;
  return micro_f1(preds, golds);
}

}  // namespace

RoundMetrics evaluate(const SessionState& state) {
  RoundMetrics m;
  m.round = state.round;
  m.n_labeled = state.labeled.size();
  m.n_remaining = state.pool_remaining.size();
  m.fraction_used = state.pool_size() == 0 ? 0.0
                                           : static_cast<double>(m.n_labeled) / static_cast<double>(state.pool_size());
  m.f1_test = split_f1(state, state.dataset->split(Split::test), state.test_vectors);
  m.f1_dev = split_f1(state, state.dataset->split(Split::dev), state.dev_vectors);
  if (!state.labeled.empty()) {
    std::vector<std::size_t> preds, golds;
    for (const auto& item : state.labeled) {
      preds.push_back(predict(state.model, state.train_vectors[state.train_index.find(item.instance_id)->second]));
      golds.push_back(class_of(state, item.label));
    }
    m.f1_train = micro_f1(preds, golds);
  }
  {
    std::vector<std::size_t> preds, golds;
    for (auto i : state.pool_remaining) {
      const auto& inst = state.train_instance(i);
      if (!inst.gold_label) continue;
      preds.push_back(predict(state.model, state.train_vectors[i]));
      golds.push_back(class_of(state, *inst.gold_label));
    }
    if (!preds.empty()) m.f1_remaining = micro_f1(preds, golds);
  }
  return m;
}

SessionState bootstrap(std::shared_ptr<const Dataset> dataset, Lexicon lexicon, NegativeFilter filter,
                       StrategySpec strategy, std::size_t warm_n, std::uint64_t seed, EngineConfig config) {
  if (!dataset) throw InvalidArgument("bootstrap: no dataset");
  if (dataset->label_set.size() < 2) throw InvalidArgument("bootstrap: the dataset has fewer than 2 labels");
  const auto& train_split = dataset->split(Split::train);
  if (train_split.empty()) throw InvalidArgument("bootstrap: the train split is empty");
  if (warm_n < 1) throw InvalidArgument("bootstrap: warm_n must be >= 1");
  if (warm_n > train_split.size())
    throw InvalidArgument("bootstrap: warm_n (" + std::to_string(warm_n) + ") exceeds the pool size (" +
                          std::to_string(train_split.size()) + ")");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < train_split.size(); ++i)
    if (train_split[i].gold_label) eligible.push_back(i);
  if (warm_n > eligible.size())
    throw InvalidArgument("bootstrap: warm_n (" + std::to_string(warm_n) + ") exceeds the number of labeled pool instances (" +
                          std::to_string(eligible.size()) + ")");

  SessionState state;
  state.dataset = std::move(dataset);
  state.config = std::move(config);
  state.strategy = strategy;
  state.lexicon = std::move(lexicon);
  state.filter = std::move(filter);
  state.space = FeatureSpace(state.config.hash_dims, state.lexicon.categories());
  state.seed = seed;
  state.rng = Rng(seed);
  tokenize_all(state);
  refeaturize(state);

  std::vector<std::size_t> chosen;
  constexpr int kMaxDraws = 10;
  for (int attempt = 0; attempt < kMaxDraws && chosen.empty(); ++attempt) {
    std::vector<std::size_t> order = eligible;
    for (std::size_t i = 0; i < warm_n; ++i) std::swap(order[i], order[i + state.rng.below(order.size() - i)]);
    order.resize(warm_n);
    std::set<std::string_view> labels;
    for (auto i : order) labels.insert(*train_split[i].gold_label);
    if (labels.size() >= 2) chosen = std::move(order);
  }
  if (chosen.empty())
    throw InvalidArgument("bootstrap: seed set contains fewer than 2 classes after " + std::to_string(kMaxDraws) +
                          " draws");
  std::sort(chosen.begin(), chosen.end());

  for (auto i : chosen) state.labeled.push_back({train_split[i].id, *train_split[i].gold_label, Provenance::seed});
  for (std::size_t i = 0, c = 0; i < train_split.size(); ++i) {
    if (c < chosen.size() && chosen[c] == i) {
      ++c;
      continue;
    }
    state.pool_remaining.push_back(i);
  }

  const auto batch = training_batch(state);
  const double l2 = choose_l2(state, batch, state.rng.next());
  TrainConfig cfg = state.config.train;
  cfg.l2_strength = l2;
  cfg.warm_start = false;
  state.model = train(batch, state.dataset->label_set, state.space.dimension(), cfg);
  state.round = 0;
  state.history.push_back(evaluate(state));
  return state;
}

RoundMetrics merge_and_retrain(SessionState& state, std::span<const StagedLabel> labels) {
  std::set<std::size_t> taken;
  for (const auto& staged : labels) {
    auto it = state.train_index.find(staged.instance_id);
    if (it == state.train_index.end() || !state.is_remaining(staged.instance_id))
      throw InvalidArgument("instance \"" + staged.instance_id + "\" is not in the remaining pool");
    if (!taken.insert(it->second).second)
      throw InvalidArgument("instance \"" + staged.instance_id + "\" appears twice in one batch");
    class_of(state, staged.label);
  }
  for (const auto& staged : labels) state.labeled.push_back({staged.instance_id, staged.label, staged.provenance});
  std::vector<std::size_t> kept;
  kept.reserve(state.pool_remaining.size() - taken.size());
  for (auto i : state.pool_remaining)
    if (!taken.count(i)) kept.push_back(i);
  state.pool_remaining = std::move(kept);

  const auto batch = training_batch(state);
  TrainConfig cfg = state.config.train;
  cfg.l2_strength = state.model.l2_strength;
  cfg.warm_start = true;
  const std::size_t next_round = state.round + 1;
  if (state.config.reselect_l2_every > 0 && next_round % state.config.reselect_l2_every == 0)
    cfg.l2_strength = choose_l2(state, batch, state.rng.next());
  state.model = train(batch, state.dataset->label_set, state.space.dimension(), cfg, &state.model);
  state.round = next_round;
  auto metrics = evaluate(state);
  state.history.push_back(metrics);
  return metrics;
}

RoundMetrics run_round(SessionState& state, std::size_t budget_k, const AnnotatorPolicy& policy) {
  if (state.pool_remaining.empty()) throw PoolExhausted("the unlabeled pool is exhausted");
  std::vector<ScoredInstance> scored;
  scored.reserve(state.pool_remaining.size());
  for (auto i : state.pool_remaining) {
    auto probs = predict_proba(state.model, state.train_vectors[i]);
    const double score = uncertainty(state.strategy.scorer, probs);
    scored.push_back({state.train_instance(i).id, std::move(probs), score});
  }
  StrategySpec spec = state.strategy;
  spec.k = budget_k;
  spec.seed = state.rng.next();
  const auto chosen = select(scored, spec);

  std::unordered_map<std::string_view, const ScoredInstance*> by_id;
  for (const auto& s : scored) by_id.emplace(s.instance_id, &s);
  std::vector<StagedLabel> staged;
  staged.reserve(chosen.size());
  for (const auto& id : chosen) {
    const auto& inst = state.train_instance(state.train_index.find(id)->second);
    if (!inst.gold_label) throw DataError("simulation needs a gold label for instance \"" + id + "\"");
    const auto& probs = by_id.at(id)->probabilities;
    const auto& predicted = state.dataset->label_set[argmax(probs)];
    auto [label, provenance] = annotate_simulated(predicted, probs, *inst.gold_label, policy);
    staged.push_back({id, std::move(label), provenance});
  }
  return merge_and_retrain(state, staged);
}

std::vector<RoundMetrics> run_simulation(std::shared_ptr<const Dataset> dataset, const Lexicon& lexicon,
                                         const NegativeFilter& filter, const StrategySpec& strategy,
                                         const SimulationOptions& options) {
  auto state = bootstrap(std::move(dataset), lexicon, filter, strategy, options.warm_n, options.seed, options.config);
  auto reached = [&](const RoundMetrics& m) { return options.dev_target && m.f1_dev && *m.f1_dev >= *options.dev_target; };
  if (reached(state.history.back())) return state.history;
  while (state.round < options.rounds && !state.pool_remaining.empty()) {
    const auto m = run_round(state, options.budget_k, options.policy);
    if (reached(m)) break;
  }
  return state.history;
}

FullDataResult train_full_data(const Dataset& dataset, const Lexicon& lexicon, const NegativeFilter& filter,
                               std::uint64_t seed, const EngineConfig& config) {
  const FeatureSpace space(config.hash_dims, lexicon.categories());
  const Featurizer featurizer(space, lexicon, filter, config.featurize);
  std::vector<LabeledVector> batch;
  for (const auto& inst : dataset.split(Split::train))
    if (inst.gold_label) batch.push_back({featurizer(tokenize(inst.text)), *dataset.label_index(*inst.gold_label)});
  if (batch.empty()) throw InvalidArgument("train_full_data: no labeled train instances");

  FullDataResult out;
  out.l2_strength = config.train.l2_strength;
  if (!config.l2_grid.empty() && config.cv_folds >= 2 && batch.size() >= config.cv_folds)
    out.l2_strength = select_l2(batch, dataset.label_set, space.dimension(), config.l2_grid, config.cv_folds, seed,
                                config.train)
                          .best;
  TrainConfig cfg = config.train;
  cfg.l2_strength = out.l2_strength;
  cfg.warm_start = false;
  const auto model = train(batch, dataset.label_set, space.dimension(), cfg);
  auto score = [&](Split split) -> std::optional<double> {
    std::vector<std::size_t> preds, golds;
    for (const auto& inst : dataset.split(split)) {
      if (!inst.gold_label) continue;
      preds.push_back(predict(model, featurizer(tokenize(inst.text))));
      golds.push_back(*dataset.label_index(*inst.gold_label));
    }
    if (preds.empty()) return std::nullopt;
    return micro_f1(preds, golds);
  };
  out.f1_test = score(Split::test);
  out.f1_dev = score(Split::dev);
  return out;
}

// ---------------------------------------------------------------------------
// Explanations and suggestions
// ---------------------------------------------------------------------------

std::vector<FeatureContribution> top_features(const ModelState& model, const SparseVector& x,
                                              std::size_t predicted_class, std::size_t n) {
  if (n < 1) throw InvalidArgument("top_features: n must be >= 1");
  if (predicted_class >= model.num_classes()) throw InvalidArgument("top_features: class out of range");
  if (x.dimension() != model.dimension) throw DimensionMismatch("top_features: dimension mismatch");
  const auto w = model.weights(predicted_class);
  std::vector<FeatureContribution> out;
  out.reserve(x.nnz());
  for (std::size_t k = 0; k < x.nnz(); ++k) {
    const auto j = x.indices()[k];
    out.push_back({j, w[j] * x.values()[k]});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    const double fa = std::fabs(a.contribution), fb = std::fabs(b.contribution);
    if (fa != fb) return fa > fb;
    return a.index < b.index;
  });
  if (out.size() > n) out.resize(n);
  return out;
}

std::string feature_name(const FeatureSpace& space, std::uint32_t index) {
  if (index < space.hash_dims()) return "hash:" + std::to_string(index);
  const std::size_t c = index - space.hash_dims();
  if (c >= space.lexicon_categories().size()) throw InvalidArgument("feature index outside the feature space");
  return "lexicon:" + space.lexicon_categories()[c];
}

std::vector<std::pair<std::string, double>> keyphrase_candidates(std::span<const std::string> texts, std::size_t n,
                                                                 const NegativeFilter& filter) {
  std::map<std::string, std::size_t> tf, df;
  for (const auto& text : texts) {
    const auto tokens = tokenize(text);
    std::vector<bool> usable(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) usable[i] = !is_placeholder(tokens[i]) && !filter.contains(tokens[i]);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!usable[i]) continue;
      ++tf[tokens[i]];
      seen.insert(tokens[i]);
      if (i + 1 < tokens.size() && usable[i + 1]) {
        std::string bigram = tokens[i] + ' ' + tokens[i + 1];
        ++tf[bigram];
        seen.insert(std::move(bigram));
      }
    }
    for (const auto& term : seen) ++df[term];
  }
  const double D = static_cast<double>(texts.size());
  std::vector<std::pair<std::string, double>> ranked;
  ranked.reserve(tf.size());
  for (const auto& [term, count] : tf) {
    const double idf = std::log((1.0 + D) / (1.0 + static_cast<double>(df[term]))) + 1.0;
    ranked.emplace_back(term, static_cast<double>(count) * idf);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > n) ranked.resize(n);
  return ranked;
}

std::vector<std::pair<std::string, double>> pool_keyphrases(const SessionState& state, std::size_t n) {
  std::vector<std::string> texts;
  texts.reserve(state.pool_remaining.size());
  for (auto i : state.pool_remaining) texts.push_back(state.train_instance(i).text);
  return keyphrase_candidates(texts, n, state.filter);
}

std::vector<Suggestion> suggest(const SessionState& state, std::size_t k, std::size_t features_per_item) {
  if (k == 0 || state.pool_remaining.empty()) return {};
  const Scorer scorer = state.strategy.scorer == Scorer::none ? Scorer::entropy : state.strategy.scorer;
  std::vector<ScoredInstance> scored;
  scored.reserve(state.pool_remaining.size());
  for (auto i : state.pool_remaining) {
    auto probs = predict_proba(state.model, state.train_vectors[i]);
    const double score = uncertainty(scorer, probs);
    scored.push_back({state.train_instance(i).id, std::move(probs), score});
  }
  const auto chosen = select(scored, StrategySpec{scorer, Selector::top_k, k, 0});
  std::unordered_map<std::string_view, const ScoredInstance*> by_id;
  for (const auto& s : scored) by_id.emplace(s.instance_id, &s);

  const Featurizer featurizer(state.space, state.lexicon, state.filter, state.config.featurize);
  std::vector<Suggestion> out;
  out.reserve(chosen.size());
  for (const auto& id : chosen) {
    const std::size_t idx = state.train_index.find(id)->second;
    const auto& inst = state.train_instance(idx);
    const auto& tokens = state.train_tokens[idx];
    const auto* s = by_id.at(id);
    Suggestion sug;
    sug.instance_id = id;
    sug.text = inst.text;
    const auto cls = argmax(s->probabilities);
    sug.predicted_label = state.dataset->label_set[cls];
    sug.probabilities = s->probabilities;
    sug.uncertainty = s->score;
    for (const auto& fc : top_features(state.model, state.train_vectors[idx], cls, std::max<std::size_t>(features_per_item, 1))) {
      NamedFeature nf;
      nf.name = feature_name(state.space, fc.index);
      nf.contribution = fc.contribution;
      for (const auto& t : tokens) {
        bool feeds = false;
        if (fc.index < state.space.hash_dims()) {
          feeds = !state.filter.contains(t) && state.space.bucket(t) == fc.index;
        } else {
          const auto channels = featurizer.lexicon_channels(t);
          feeds = std::find(channels.begin(), channels.end(), fc.index) != channels.end();
        }
        if (feeds && std::find(nf.tokens.begin(), nf.tokens.end(), t) == nf.tokens.end()) nf.tokens.push_back(t);
      }
      sug.top_features.push_back(std::move(nf));
    }
    for (const auto& t : tokens) {
      for (auto channel : featurizer.lexicon_channels(t)) {
        std::pair<std::string, std::string> hit{t, state.space.lexicon_categories()[channel - state.space.hash_dims()]};
        if (std::find(sug.lexicon_hits.begin(), sug.lexicon_hits.end(), hit) == sug.lexicon_hits.end())
          sug.lexicon_hits.push_back(std::move(hit));
      }
    }
    out.push_back(std::move(sug));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feedback
// ---------------------------------------------------------------------------

bool apply_feedback(SessionState& state, const Feedback& feedback, bool retrain) {
  Lexicon lexicon = state.lexicon;
  NegativeFilter filter = state.filter;
  bool changed = false;
  for (const auto& [term, category] : feedback.accepted_lexicon) changed |= lexicon.accept(term, category);
  for (const auto& [term, category] : feedback.rejected_lexicon) changed |= lexicon.reject(term, category);
  for (const auto& term : feedback.useless_features) changed |= filter.add(term);
  if (!changed) return false;

  const FeatureSpace old_space = state.space;
  FeatureSpace space = rebuild_space(old_space, lexicon);
  ModelState model = ModelState::zeros(state.model.classes, space.dimension(), state.model.l2_strength);
  for (std::size_t c = 0; c < model.num_classes(); ++c) {
    const auto old_w = state.model.weights(c);
    auto w = model.weights(c);
    std::copy_n(old_w.begin(), space.hash_dims(), w.begin());
    for (const auto& category : space.lexicon_categories()) {
      const auto from = old_space.category_index(category);
      if (from >= 0) w[static_cast<std::size_t>(space.category_index(category))] = old_w[static_cast<std::size_t>(from)];
    }
    model.bias()[c] = state.model.bias()[c];
  }

  state.lexicon = std::move(lexicon);
  state.filter = std::move(filter);
  state.space = std::move(space);
  state.model = std::move(model);
  refeaturize(state);
  if (retrain && !state.labeled.empty()) {
    TrainConfig cfg = state.config.train;
    cfg.l2_strength = state.model.l2_strength;
    cfg.warm_start = true;
    state.model = train(training_batch(state), state.dataset->label_set, state.space.dimension(), cfg, &state.model);
  }
  return true;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

json session_to_json(const SessionState& state) {
  json entries = json::array();
  for (const auto& e : state.lexicon.entries())
    entries.push_back({e.term, e.category, e.status == EntryStatus::active ? "active" : "rejected"});
  json labeled = json::array();
  for (const auto& item : state.labeled)
    labeled.push_back({item.instance_id, item.label, std::string(to_string(item.provenance))});
  json history = json::array();
  for (const auto& m : state.history) history.push_back(metrics_to_json(m));
  const auto& cfg = state.config;
  return {{"format", "activelex-session"},
          {"version", 1},
          {"dataset", state.dataset->name},
          {"pool_size", state.pool_size()},
          {"config",
           {{"hash_dims", cfg.hash_dims},
            {"max_iterations", cfg.train.max_iterations},
            {"gradient_tolerance", cfg.train.gradient_tolerance},
            {"default_l2", cfg.train.l2_strength},
            {"lbfgs_history", cfg.train.lbfgs_history},
            {"l2_grid", cfg.l2_grid},
            {"cv_folds", cfg.cv_folds},
            {"reselect_l2_every", cfg.reselect_l2_every},
            {"binary_lexicon", cfg.featurize.binary_lexicon}}},
          {"strategy", {{"name", strategy_name(state.strategy)}, {"k", state.strategy.k}, {"seed", state.strategy.seed}}},
          {"seed", state.seed},
          {"rng", state.rng.state()},
          {"round", state.round},
          {"lexicon", {{"entries", std::move(entries)}, {"declared", state.lexicon.declared_categories()}}},
          {"filter", state.filter.terms()},
          {"model", model_to_json(state.model, state.space)},
          {"labeled", std::move(labeled)},
          {"pool_remaining", state.remaining_ids()},
          {"history", std::move(history)}};
}

SessionState session_from_json(const json& doc, std::shared_ptr<const Dataset> dataset) {
  if (!dataset) throw InvalidArgument("session_from_json: no dataset");
  try {
    if (doc.value("format", "") != "activelex-session") throw DataError("not an activelex session checkpoint");
    SessionState state;
    state.dataset = std::move(dataset);
    if (doc.at("pool_size").get<std::size_t>() != state.pool_size())
      throw DataError("checkpoint pool size does not match dataset \"" + state.dataset->name + "\"");
    const auto& c = doc.at("config");
    state.config.hash_dims = c.at("hash_dims").get<std::size_t>();
    state.config.train.max_iterations = c.at("max_iterations").get<std::size_t>();
    state.config.train.gradient_tolerance = c.at("gradient_tolerance").get<double>();
    state.config.train.l2_strength = c.at("default_l2").get<double>();
    state.config.train.lbfgs_history = c.at("lbfgs_history").get<std::size_t>();
    state.config.l2_grid = c.at("l2_grid").get<std::vector<double>>();
    state.config.cv_folds = c.at("cv_folds").get<std::size_t>();
    state.config.reselect_l2_every = c.at("reselect_l2_every").get<std::size_t>();
    state.config.featurize.binary_lexicon = c.at("binary_lexicon").get<bool>();

    const auto& s = doc.at("strategy");
    auto spec = parse_strategy(s.at("name").get<std::string>());
    if (!spec) throw DataError("unknown strategy in checkpoint");
    state.strategy = *spec;
    state.strategy.k = s.at("k").get<std::size_t>();
    state.strategy.seed = s.at("seed").get<std::uint64_t>();
    state.seed = doc.at("seed").get<std::uint64_t>();
    state.rng = Rng::from_state(doc.at("rng").get<Rng::State>());
    state.round = doc.at("round").get<std::size_t>();

    for (const auto& e : doc.at("lexicon").at("entries")) {
      const auto status = e.at(2).get<std::string>();
      if (status == "active")
        state.lexicon.accept(e.at(0).get<std::string>(), e.at(1).get<std::string>());
      else
        state.lexicon.reject(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    }
    for (const auto& cat : doc.at("lexicon").at("declared")) state.lexicon.declare_category(cat.get<std::string>());
    for (const auto& t : doc.at("filter")) state.filter.add(t.get<std::string>());

    auto persisted = model_from_json(doc.at("model"));
    state.space = std::move(persisted.space);
    state.model = std::move(persisted.model);
    if (state.space.hash_dims() != state.config.hash_dims || state.space != rebuild_space(state.space, state.lexicon))
      throw DataError("checkpoint model does not match its lexicon");
    if (state.model.classes != state.dataset->label_set) throw DataError("checkpoint classes differ from the dataset");

    tokenize_all(state);
    refeaturize(state);

    std::set<std::size_t> labeled_idx;
    for (const auto& item : doc.at("labeled")) {
      LabeledItem li{item.at(0).get<std::string>(), item.at(1).get<std::string>(), Provenance::seed};
      auto prov = parse_provenance(item.at(2).get<std::string>());
      if (!prov) throw DataError("unknown provenance in checkpoint");
      li.provenance = *prov;
      auto it = state.train_index.find(li.instance_id);
      if (it == state.train_index.end()) throw DataError("checkpoint references unknown instance " + li.instance_id);
      if (!labeled_idx.insert(it->second).second) throw DataError("instance labeled twice: " + li.instance_id);
      class_of(state, li.label);
      state.labeled.push_back(std::move(li));
    }
    for (const auto& id : doc.at("pool_remaining")) {
      auto it = state.train_index.find(id.get<std::string>());
      if (it == state.train_index.end()) throw DataError("checkpoint references unknown instance");
      if (labeled_idx.count(it->second)) throw DataError("instance both labeled and remaining");
      state.pool_remaining.push_back(it->second);
    }
    std::sort(state.pool_remaining.begin(), state.pool_remaining.end());
    if (std::adjacent_find(state.pool_remaining.begin(), state.pool_remaining.end()) != state.pool_remaining.end())
      throw DataError("duplicate pool entries in checkpoint");
    if (state.labeled.size() + state.pool_remaining.size() != state.pool_size())
      throw DataError("checkpoint labeled + remaining does not cover the pool");
    for (const auto& m : doc.at("history")) state.history.push_back(metrics_from_json(m));
    return state;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed session checkpoint: ") + e.what());
  }
}

}  // namespace activelex
