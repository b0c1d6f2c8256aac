#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace activelex {

/// Shannon entropy −Σ p ln p (0·ln 0 = 0). Higher means more uncertain.
double score_entropy(std::span<const double> p);

/// Gap between the largest and second-largest probability. Lower means more uncertain.
double score_margin(std::span<const double> p);

enum class Scorer { none, entropy, margin };
enum class Selector { random, top_k, proportional };

struct StrategySpec {
  Scorer scorer = Scorer::entropy;
  Selector selector = Selector::top_k;
  std::size_t k = 100;
  std::uint64_t seed = 0;

  bool operator==(const StrategySpec&) const = default;
};

/// "random", "entropy-top", "entropy-prop", "margin-top", "margin-prop".
std::optional<StrategySpec> parse_strategy(std::string_view name);
std::string strategy_name(const StrategySpec& spec);
const std::vector<std::string>& strategy_names();

/// Uncertainty on a common "higher = select first" scale: entropy as is,
/// margin converted to 1 − m, zero for Scorer::none.
double uncertainty(Scorer scorer, std::span<const double> p);

struct ScoredInstance {
  std::string instance_id;
  std::vector<double> probabilities;
  double score = 0.0;  // uncertainty, >= 0
};

/// Picks min(k, |pool|) distinct ids.
///
/// random: uniform without replacement. top_k: highest scores, ties by
/// ascending id. proportional: sequential draws ∝ score without replacement,
/// uniform when every remaining score is zero. Deterministic in (pool order, spec).
std::vector<std::string> select(std::span<const ScoredInstance> pool, const StrategySpec& spec);

}  // namespace activelex
