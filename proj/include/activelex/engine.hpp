#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "activelex/classifier.hpp"
#include "activelex/corpus.hpp"
#include "activelex/features.hpp"
#include "activelex/query.hpp"
#include "activelex/rng.hpp"

namespace activelex {

enum class Provenance { seed, human, model_accepted };

std::string_view to_string(Provenance p);
std::optional<Provenance> parse_provenance(std::string_view name);

struct LabeledItem {
  std::string instance_id;
  std::string label;
  Provenance provenance = Provenance::seed;

  bool operator==(const LabeledItem&) const = default;
};

/// One row of a learning curve. Absent scores mean the split had no gold labels
/// (or, for the remaining pool, that the pool is empty).
struct RoundMetrics {
  std::size_t round = 0;
  std::size_t n_labeled = 0;
  std::size_t n_remaining = 0;
  double fraction_used = 0.0;
  std::optional<double> f1_test;
  std::optional<double> f1_dev;
  std::optional<double> f1_train;
  std::optional<double> f1_remaining;

  bool operator==(const RoundMetrics&) const = default;
};

inline constexpr std::string_view kMetricsCsvHeader =
    "round,n_labeled,n_remaining,fraction_used,f1_test,f1_dev,f1_train,f1_remaining";

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);
std::string metrics_csv_row(const RoundMetrics& m);
std::string metrics_to_csv(std::span<const RoundMetrics> history);
nlohmann::json metrics_to_json(const RoundMetrics& m);
RoundMetrics metrics_from_json(const nlohmann::json& j);

struct AnnotatorPolicy {
  enum class Mode { oracle, confidence_accept };
  Mode mode = Mode::oracle;
  double tau = 0.9;

  bool operator==(const AnnotatorPolicy&) const = default;
};

/// "oracle" or "confidence:<tau>".
std::optional<AnnotatorPolicy> parse_policy(std::string_view text);
std::string policy_name(const AnnotatorPolicy& policy);

/// oracle → (gold, human). confidence_accept → the prediction when its
/// probability reaches tau, otherwise the gold label.
std::pair<std::string, Provenance> annotate_simulated(std::string_view predicted_label,
                                                      std::span<const double> probabilities, std::string_view gold,
                                                      const AnnotatorPolicy& policy);

struct EngineConfig {
  std::size_t hash_dims = kDefaultHashDims;
  TrainConfig train{};
  std::vector<double> l2_grid = kDefaultL2Grid;
  std::size_t cv_folds = 3;
  /// Re-run λ selection every this many rounds; 0 keeps the bootstrap choice.
  std::size_t reselect_l2_every = 0;
  FeaturizeOptions featurize{};

  bool operator==(const EngineConfig&) const = default;
};

/// Everything an active-learning session owns.
///
/// Pool membership is tracked by index into the dataset's train split.
/// Labeled and remaining indices partition the train split at all times.
struct SessionState {
  std::shared_ptr<const Dataset> dataset;
  EngineConfig config;
  StrategySpec strategy;
  Lexicon lexicon;
  NegativeFilter filter;
  FeatureSpace space;
  ModelState model;
  std::vector<LabeledItem> labeled;
  std::vector<std::size_t> pool_remaining;  // ascending train-split indices
  std::size_t round = 0;
  std::uint64_t seed = 0;
  Rng rng;
  std::vector<RoundMetrics> history;

  // Derived from the dataset, lexicon and filter; rebuilt on load and feedback.
  std::vector<TokenStream> train_tokens, dev_tokens, test_tokens;
  std::vector<SparseVector> train_vectors, dev_vectors, test_vectors;
  std::map<std::string, std::size_t, std::less<>> train_index;

  std::size_t pool_size() const { return dataset->split(Split::train).size(); }
  const Instance& train_instance(std::size_t index) const { return dataset->split(Split::train)[index]; }
  std::vector<std::string> remaining_ids() const;
  bool is_remaining(std::string_view instance_id) const;
};

/// Seeds a session: draws `warm_n` gold-labeled train instances uniformly,
/// picks λ by cross-validation on them, trains, and records round 0.
SessionState bootstrap(std::shared_ptr<const Dataset> dataset, Lexicon lexicon, NegativeFilter filter,
                       StrategySpec strategy, std::size_t warm_n, std::uint64_t seed, EngineConfig config = {});

/// Metrics of the current model on every split. Does not modify the session.
RoundMetrics evaluate(const SessionState& state);

struct StagedLabel {
  std::string instance_id;
  std::string label;
  Provenance provenance = Provenance::human;
};

/// Moves the given pool instances into the labeled set, retrains with warm
/// start, advances the round and appends its metrics.
RoundMetrics merge_and_retrain(SessionState& state, std::span<const StagedLabel> labels);

/// One simulated round: score the pool, select, annotate, merge, retrain, evaluate.
/// Throws PoolExhausted when nothing is left to select.
RoundMetrics run_round(SessionState& state, std::size_t budget_k, const AnnotatorPolicy& policy);

struct SimulationOptions {
  std::size_t rounds = 100;
  std::size_t budget_k = 100;
  std::size_t warm_n = 100;
  AnnotatorPolicy policy{};
  std::uint64_t seed = 0;
  std::optional<double> dev_target;  // stop once f1_dev reaches this
  EngineConfig config{};
};

std::vector<RoundMetrics> run_simulation(std::shared_ptr<const Dataset> dataset, const Lexicon& lexicon,
                                         const NegativeFilter& filter, const StrategySpec& strategy,
                                         const SimulationOptions& options);

struct FullDataResult {
  double l2_strength = 0.0;
  std::optional<double> f1_test;
  std::optional<double> f1_dev;
};

/// Reference model trained on every gold-labeled train instance, λ chosen by CV.
FullDataResult train_full_data(const Dataset& dataset, const Lexicon& lexicon, const NegativeFilter& filter,
                               std::uint64_t seed, const EngineConfig& config = {});

struct FeatureContribution {
  std::uint32_t index = 0;
  double contribution = 0.0;
};

/// weight[class][j] · x[j] for the nonzero x[j], largest |contribution| first
/// (ties by index), at most n entries.
std::vector<FeatureContribution> top_features(const ModelState& model, const SparseVector& x,
                                              std::size_t predicted_class, std::size_t n);

/// "hash:<index>" for unigram buckets, "lexicon:<category>" for lexicon channels.
std::string feature_name(const FeatureSpace& space, std::uint32_t index);

/// TF-IDF ranked unigrams and bigrams (idf = ln((1+D)/(1+df)) + 1), skipping
/// placeholders and filtered terms. Ties are broken alphabetically.
std::vector<std::pair<std::string, double>> keyphrase_candidates(std::span<const std::string> texts, std::size_t n,
                                                                 const NegativeFilter& filter = {});

struct NamedFeature {
  std::string name;
  std::vector<std::string> tokens;  // tokens of this instance that feed the feature
  double contribution = 0.0;
};

struct Suggestion {
  std::string instance_id;
  std::string text;
  std::string predicted_label;
  std::vector<double> probabilities;
  double uncertainty = 0.0;
  std::vector<NamedFeature> top_features;
  std::vector<std::pair<std::string, std::string>> lexicon_hits;
};

/// The k most uncertain pool instances under the session's scorer (entropy
/// when the strategy has none), ties by id.
std::vector<Suggestion> suggest(const SessionState& state, std::size_t k, std::size_t features_per_item = 10);

/// Keyphrases over the current remaining pool.
std::vector<std::pair<std::string, double>> pool_keyphrases(const SessionState& state, std::size_t n);

struct Feedback {
  std::vector<std::pair<std::string, std::string>> accepted_lexicon;
  std::vector<std::pair<std::string, std::string>> rejected_lexicon;
  std::vector<std::string> useless_features;

  bool empty() const { return accepted_lexicon.empty() && rejected_lexicon.empty() && useless_features.empty(); }
};

/// Updates lexicon and filter, rebuilds the feature space, re-featurizes every
/// instance and remaps the model. Retrains (warm start) when `retrain` is set.
/// Returns false, leaving the session untouched, when nothing changed.
bool apply_feedback(SessionState& state, const Feedback& feedback, bool retrain = true);

/// Serializes the full session (model, labels, pool, lexicon, filter, RNG, history).
nlohmann::json session_to_json(const SessionState& state);
/// Restores a session; `dataset` must be the dataset the session was created from.
SessionState session_from_json(const nlohmann::json& doc, std::shared_ptr<const Dataset> dataset);

}  // namespace activelex
