#include "activelex/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "activelex/error.hpp"
#include "activelex/rng.hpp"

namespace activelex {

namespace {

struct Categorical {
  std::vector<double> cumulative;

  explicit Categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) cumulative.push_back(total += w);
  }

  std::size_t draw(Rng& rng) const {
    const double target = rng.uniform() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
  }
};

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw InvalidArgument("synthetic corpus needs at least 2 classes");
  if (spec.vocab_per_class < 2) throw InvalidArgument("vocab_per_class must be >= 2");
  if (!(spec.overlap >= 0.0 && spec.overlap < 1.0)) throw InvalidArgument("overlap must be in [0, 1)");
  if (!(spec.background >= 0.0 && spec.background <= 1.0)) throw InvalidArgument("background must be in [0, 1]");
  if (spec.min_tokens < 1 || spec.max_tokens < spec.min_tokens) throw InvalidArgument("bad document length range");
  if (spec.train + spec.dev + spec.test == 0) throw InvalidArgument("synthetic corpus would be empty");

  if (spec.subtopics < 1) throw InvalidArgument("subtopics must be >= 1");
  if (!(spec.shared_mass >= 0.0 && spec.shared_mass <= 1.0)) throw InvalidArgument("shared_mass must be in [0, 1]");

  Rng rng(spec.seed);
  const auto shared_count = static_cast<std::size_t>(std::llround(spec.overlap * static_cast<double>(spec.vocab_per_class)));
  const std::size_t own_count = spec.vocab_per_class - shared_count;
  if (own_count < spec.subtopics) throw InvalidArgument("fewer class-specific words than subtopics");

  auto zipf = [&](std::size_t n, double exponent) {
    std::vector<double> w(n);
    for (std::size_t r = 0; r < n; ++r) w[r] = 1.0 / std::pow(static_cast<double>(r + 1), exponent);
    return w;
  };
  auto shuffle = [&](std::vector<std::string>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  };

  std::vector<std::string> shared;
  for (std::size_t i = 0; i < shared_count; ++i) shared.push_back("common" + std::to_string(i));
  std::vector<std::string> all_words = shared;

  struct ClassModel {
    std::vector<std::string> shared_ranked;
    std::vector<std::vector<std::string>> blocks;
  };
  std::vector<ClassModel> models(spec.classes);
  for (auto& m : models) {
    m.shared_ranked = shared;
    shuffle(m.shared_ranked);
  }
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::vector<std::string> own;
    for (std::size_t i = 0; i < own_count; ++i) {
      own.push_back("c" + std::to_string(c) + "w" + std::to_string(i));
      all_words.push_back(own.back());
    }
    shuffle(own);
    for (std::size_t s = 0; s < spec.subtopics; ++s) {
      const std::size_t lo = own_count * s / spec.subtopics, hi = own_count * (s + 1) / spec.subtopics;
      models[c].blocks.emplace_back(own.begin() + static_cast<std::ptrdiff_t>(lo), own.begin() + static_cast<std::ptrdiff_t>(hi));
    }
  }
  const Categorical shared_dist(zipf(std::max<std::size_t>(shared_count, 1), spec.zipf_exponent));
  const Categorical subtopic_prior(zipf(spec.subtopics, spec.subtopic_exponent));
  std::vector<Categorical> block_dist;
  for (const auto& b : models.front().blocks) block_dist.emplace_back(zipf(b.size(), spec.zipf_exponent));

  std::vector<std::string> labels;
  for (std::size_t c = 0; c < spec.classes; ++c) labels.push_back("class" + std::to_string(c));

  std::map<Split, std::vector<Instance>> splits;
  auto make = [&](Split split, std::size_t count, const char* prefix) {
    auto& out = splits[split];
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t c = rng.below(spec.classes);
      const std::size_t topic = subtopic_prior.draw(rng);
      const auto& m = models[c];
      const std::size_t len = spec.min_tokens + rng.below(spec.max_tokens - spec.min_tokens + 1);
      std::string text;
      for (std::size_t t = 0; t < len; ++t) {
        const std::string* word;
        if (rng.uniform() < spec.background)
          word = &all_words[rng.below(all_words.size())];
        else if (shared_count > 0 && rng.uniform() < spec.shared_mass)
          word = &m.shared_ranked[shared_dist.draw(rng)];
        else
          word = &m.blocks[topic][block_dist[topic].draw(rng)];
        if (!text.empty()) text += ' ';
        text += *word;
      }
      out.push_back({std::string(prefix) + std::to_string(i), std::move(text), labels[c]});
    }
  };
  make(Split::train, spec.train, "tr");
  make(Split::dev, spec.dev, "dv");
  make(Split::test, spec.test, "te");
  for (auto it = splits.begin(); it != splits.end();) it = it->second.empty() ? splits.erase(it) : std::next(it);
  return make_dataset("synthetic", std::move(splits), labels);
}

}  // namespace activelex
