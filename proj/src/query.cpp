#include "activelex/query.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "activelex/error.hpp"
#include "activelex/rng.hpp"

namespace activelex {

namespace {

void check_simplex(std::span<const double> p) {
  if (p.size() < 2) throw InvalidArgument("probability vector needs at least 2 entries");
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("probabilities must be finite and non-negative");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw InvalidArgument("probabilities do not sum to 1");
}

}  // namespace

double score_entropy(std::span<const double> p) {
  check_simplex(p);
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return std::max(h, 0.0);
}

double score_margin(std::span<const double> p) {
  check_simplex(p);
  double first = -1.0, second = -1.0;
  for (double v : p) {
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }
  return first - second;
}

double uncertainty(Scorer scorer, std::span<const double> p) {
  switch (scorer) {
    case Scorer::entropy: return score_entropy(p);
    case Scorer::margin: return 1.0 - score_margin(p);
    case Scorer::none: return 0.0;
  }
  return 0.0;
}

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names = {"random", "entropy-top", "entropy-prop", "margin-top",
                                                 "margin-prop"};
  return names;
}

std::optional<StrategySpec> parse_strategy(std::string_view name) {
  StrategySpec s;
  if (name == "random") {
    s.scorer = Scorer::none;
    s.selector = Selector::random;
  } else if (name == "entropy-top") {
    s.scorer = Scorer::entropy;
    s.selector = Selector::top_k;
  } else if (name == "entropy-prop") {
    s.scorer = Scorer::entropy;
    s.selector = Selector::proportional;
  } else if (name == "margin-top") {
    s.scorer = Scorer::margin;
    s.selector = Selector::top_k;
  } else if (name == "margin-prop") {
    s.scorer = Scorer::margin;
    s.selector = Selector::proportional;
  } else {
    return std::nullopt;
  }
  return s;
}

std::string strategy_name(const StrategySpec& spec) {
  if (spec.selector == Selector::random) return "random";
  const std::string scorer = spec.scorer == Scorer::margin ? "margin" : "entropy";
  return scorer + (spec.selector == Selector::top_k ? "-top" : "-prop");
}

std::vector<std::string> select(std::span<const ScoredInstance> pool, const StrategySpec& spec) {
  if (spec.k == 0) throw InvalidArgument("select: k must be positive");
  if (pool.empty()) throw InvalidArgument("select: empty pool");
  if (spec.selector == Selector::proportional && spec.scorer == Scorer::none)
    throw InvalidArgument("select: proportional sampling needs a scorer");
  {
    std::set<std::string_view> ids;
    for (const auto& s : pool) {
      if (!ids.insert(s.instance_id).second) throw InvalidArgument("select: duplicate id " + s.instance_id);
      if (!std::isfinite(s.score) || s.score < 0.0)
        throw InvalidArgument("select: score for " + s.instance_id + " must be finite and >= 0");
    }
  }
  const std::size_t take = std::min(spec.k, pool.size());
  std::vector<std::string> out;
  out.reserve(take);
  Rng rng(spec.seed);

  switch (spec.selector) {
    case Selector::random: {
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(order[i], order[i + rng.below(order.size() - i)]);
        out.push_back(pool[order[i]].instance_id);
      }
      break;
    }
    case Selector::top_k: {
      std::vector<std::size_t> order(pool.size());
      std::iota(order.begin(), order.end(), 0);
      auto better = [&](std::size_t a, std::size_t b) {
        if (pool[a].score != pool[b].score) return pool[a].score > pool[b].score;
        return pool[a].instance_id < pool[b].instance_id;
      };
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(), better);
      for (std::size_t i = 0; i < take; ++i) out.push_back(pool[order[i]].instance_id);
      break;
    }
    case Selector::proportional: {
      std::vector<std::size_t> remaining(pool.size());
      std::iota(remaining.begin(), remaining.end(), 0);
      for (std::size_t i = 0; i < take; ++i) {
        double total = 0.0;
        for (std::size_t r : remaining) total += pool[r].score;
        std::size_t pick = remaining.size() - 1;
        if (total > 0.0) {
          const double target = rng.uniform() * total;
          double cumulative = 0.0;
          for (std::size_t j = 0; j < remaining.size(); ++j) {
            cumulative += pool[remaining[j]].score;
            if (target < cumulative) {
              pick = j;
              break;
            }
          }
          // Rounding can leave target at the very top; take the last positive score.
          if (pick == remaining.size() - 1 && pool[remaining[pick]].score == 0.0) {
            for (std::size_t j = remaining.size(); j-- > 0;)
              if (pool[remaining[j]].score > 0.0) {
                pick = j;
                break;
              }
          }
        } else {
          pick = rng.below(remaining.size());
        }
        out.push_back(pool[remaining[pick]].instance_id);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
      }
      break;
    }
  }
  return out;
}

}  // namespace activelex
