#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "activelex/error.hpp"
#include "activelex/query.hpp"
#include "activelex/rng.hpp"

using namespace activelex;

namespace {

std::vector<double> random_simplex(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  double s = 0;
  for (auto& v : p) s += (v = -std::log(1.0 - rng.uniform()));
  for (auto& v : p) v /= s;
  return p;
}

std::vector<ScoredInstance> scored(std::vector<std::pair<std::string, double>> items) {
  std::vector<ScoredInstance> out;
  for (auto& [id, s] : items) out.push_back({id, {0.5, 0.5}, s});
  return out;
}

StrategySpec spec(Selector sel, std::size_t k, std::uint64_t seed = 0) {
  return {Scorer::entropy, sel, k, seed};
}

}  // namespace

TEST_CASE("entropy examples") {
  const std::vector<double> uniform{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(std::fabs(score_entropy(uniform) - std::log(3.0)) <= 1e-12);
  CHECK(score_entropy(std::vector<double>{1, 0, 0}) == 0.0);
  // -(0.5 ln 0.5 + 0.3 ln 0.3 + 0.2 ln 0.2) evaluated in long double.
  const long double h = -(0.5L * std::log(0.5L) + 0.3L * std::log(0.3L) + 0.2L * std::log(0.2L));
  CHECK(std::fabs(score_entropy(std::vector<double>{0.5, 0.3, 0.2}) - static_cast<double>(h)) <= 1e-12);
  CHECK(std::fabs(static_cast<double>(h) - 1.029653) < 1e-6);
}

TEST_CASE("margin examples") {
  CHECK(score_margin(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}) == 0.0);
  CHECK(score_margin(std::vector<double>{1, 0, 0}) == 1.0);
  CHECK(std::fabs(score_margin(std::vector<double>{0.5, 0.3, 0.2}) - 0.2) <= 1e-15);
  CHECK(std::fabs(score_margin(std::vector<double>{0.2, 0.3, 0.5}) - 0.2) <= 1e-15);
}

TEST_CASE("invalid distributions are rejected") {
  CHECK_THROWS_AS(score_entropy(std::vector<double>{0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(score_margin(std::vector<double>{1.0}), InvalidArgument);
  CHECK_THROWS_AS(score_entropy(std::vector<double>{}), InvalidArgument);
}

TEST_CASE("score bounds on random simplex vectors") {
  Rng rng(7);
  for (int t = 0; t < 2000; ++t) {
    const std::size_t n = 2 + rng.below(8);
    const auto p = random_simplex(rng, n);
    const double h = score_entropy(p), m = score_margin(p);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(n)) + 1e-12);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    CHECK(uncertainty(Scorer::margin, p) == 1.0 - m);
    CHECK(uncertainty(Scorer::entropy, p) == h);
    CHECK(uncertainty(Scorer::none, p) == 0.0);
  }
}

TEST_CASE("binary entropy and margin rank identically") {
  Rng rng(8);
  std::vector<std::vector<double>> ps;
  for (int i = 0; i < 300; ++i) {
    const double a = rng.uniform();
    ps.push_back({a, 1 - a});
  }
  auto order = [&](Scorer s) {
    std::vector<std::size_t> idx(ps.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t x, std::size_t y) { return uncertainty(s, ps[x]) > uncertainty(s, ps[y]); });
    return idx;
  };
  CHECK(order(Scorer::entropy) == order(Scorer::margin));
}

TEST_CASE("strategy names") {
  for (const auto& name : strategy_names()) {
    const auto s = parse_strategy(name);
    REQUIRE(s);
    CHECK(strategy_name(*s) == name);
  }
  CHECK(parse_strategy("random")->selector == Selector::random);
  CHECK(parse_strategy("margin-prop")->scorer == Scorer::margin);
  CHECK(parse_strategy("margin-prop")->selector == Selector::proportional);
  CHECK_FALSE(parse_strategy("foo"));
  CHECK_FALSE(parse_strategy("Entropy-Top"));
}

TEST_CASE("top_k ordering and ties") {
  const auto pool = scored({{"a", 0.9}, {"b", 0.1}, {"c", 0.5}});
  CHECK(select(pool, spec(Selector::top_k, 2)) == std::vector<std::string>{"a", "c"});
  const auto ties = scored({{"z", 0.4}, {"x", 0.4}, {"y", 0.4}});
  CHECK(select(ties, spec(Selector::top_k, 2)) == std::vector<std::string>{"x", "y"});
  CHECK(select(ties, spec(Selector::top_k, 10)).size() == 3);
  CHECK_THROWS_AS(select(ties, spec(Selector::top_k, 0)), InvalidArgument);
}

TEST_CASE("top_k ignores pool order") {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::pair<std::string, double>> items;
    for (int i = 0; i < 30; ++i) items.emplace_back("id" + std::to_string(i), static_cast<double>(rng.below(5)));
    auto pool = scored(items);
    const auto k = 1 + rng.below(30);
    const auto a = select(pool, spec(Selector::top_k, k));
    std::shuffle(pool.begin(), pool.end(), std::mt19937(static_cast<unsigned>(t)));
    CHECK(select(pool, spec(Selector::top_k, k)) == a);
  }
}

TEST_CASE("selections are distinct pool members and deterministic") {
  Rng rng(11);
  for (auto sel : {Selector::random, Selector::top_k, Selector::proportional}) {
    for (int t = 0; t < 50; ++t) {
      std::vector<std::pair<std::string, double>> items;
      const auto n = 1 + rng.below(40);
      for (std::uint64_t i = 0; i < n; ++i) items.emplace_back("i" + std::to_string(i), rng.below(3) ? rng.uniform() : 0.0);
      const auto pool = scored(items);
      const auto s = spec(sel, 1 + rng.below(50), rng.next());
      const auto picked = select(pool, s);
      CHECK(picked.size() == std::min<std::size_t>(s.k, n));
      CHECK(std::set<std::string>(picked.begin(), picked.end()).size() == picked.size());
      for (const auto& id : picked)
        CHECK(std::any_of(pool.begin(), pool.end(), [&](const ScoredInstance& x) { return x.instance_id == id; }));
      CHECK(select(pool, s) == picked);
    }
  }
}

TEST_CASE("proportional sampling frequencies") {
  const auto pool = scored({{"a", 3.0}, {"b", 1.0}});
  int heavy = 0;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) heavy += select(pool, spec(Selector::proportional, 1, seed))[0] == "a";
  CHECK(heavy / 10000.0 >= 0.73);
  CHECK(heavy / 10000.0 <= 0.77);

  const auto one = scored({{"a", 0.0}, {"b", 2.0}, {"c", 0.0}});
  for (std::uint64_t seed = 0; seed < 200; ++seed) CHECK(select(one, spec(Selector::proportional, 1, seed))[0] == "b");

  // All-zero scores fall back to uniform.
  const auto zeros = scored({{"a", 0.0}, {"b", 0.0}});
  int a = 0;
  for (std::uint64_t seed = 0; seed < 4000; ++seed) a += select(zeros, spec(Selector::proportional, 1, seed))[0] == "a";
  CHECK(std::abs(a - 2000) < 150);
}

TEST_CASE("random selection is roughly uniform") {
  const auto pool = scored({{"a", 0.9}, {"b", 0.1}, {"c", 0.5}, {"d", 0.0}});
  std::map<std::string, int> counts;
  for (std::uint64_t seed = 0; seed < 8000; ++seed) counts[select(pool, spec(Selector::random, 1, seed))[0]]++;
  for (const auto& [id, c] : counts) CHECK(std::abs(c - 2000) < 200);
}
