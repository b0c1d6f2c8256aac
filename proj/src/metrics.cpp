#include "activelex/metrics.hpp"

#include <algorithm>
#include <map>
#include <vector>

#include "activelex/error.hpp"

namespace activelex {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw InvalidArgument("predictions and golds differ in length");
  if (a == 0) throw InvalidArgument("micro_f1 of an empty sequence");
}

}  // namespace

double micro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> golds) {
  check_lengths(predictions.size(), golds.size());
  std::size_t classes = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) classes = std::max({classes, predictions[i] + 1, golds[i] + 1});
  std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == golds[i]) {
      ++tp[golds[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[golds[i]];
    }
  }
  std::size_t TP = 0, FP = 0, FN = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    TP += tp[c];
    FP += fp[c];
    FN += fn[c];
  }
  const std::size_t denom = 2 * TP + FP + FN;
  return denom == 0 ? 0.0 : static_cast<double>(2 * TP) / static_cast<double>(denom);
}

double micro_f1(std::span<const std::string> predictions, std::span<const std::string> golds) {
  check_lengths(predictions.size(), golds.size());
  std::map<std::string, std::size_t> ids;
  auto id_of = [&](const std::string& s) { return ids.emplace(s, ids.size()).first->second; };
  std::vector<std::size_t> p, g;
  p.reserve(predictions.size());
  g.reserve(golds.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    p.push_back(id_of(predictions[i]));
    g.push_back(id_of(golds[i]));
  }
  return micro_f1(std::span<const std::size_t>(p), std::span<const std::size_t>(g));
}

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> golds) {
  check_lengths(predictions.size(), golds.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == golds[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

}  // namespace activelex
