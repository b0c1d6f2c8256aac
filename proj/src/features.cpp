#include "activelex/features.hpp"

#include <algorithm>
#include <cmath>

#include "activelex/error.hpp"

namespace activelex {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c >= 0x80;
}

bool starts_with_url(std::string_view s) {
  return s.starts_with("http://") || s.starts_with("https://") || s.starts_with("www.");
}

void tokenize_chunk(std::string_view chunk, TokenStream& out) {
  std::size_t i = 0;
  while (i < chunk.size()) {
    const auto c = static_cast<unsigned char>(chunk[i]);
    if (starts_with_url(chunk.substr(i))) {
      out.emplace_back(kUrlToken);
      return;
    }
    if (c == '@' && i + 1 < chunk.size() && is_word_byte(static_cast<unsigned char>(chunk[i + 1]))) {
      out.emplace_back(kMentionToken);
      ++i;
      while (i < chunk.size() && is_word_byte(static_cast<unsigned char>(chunk[i]))) ++i;
      continue;
    }
    if (is_word_byte(c)) {
      const std::size_t start = i;
      while (i < chunk.size() && is_word_byte(static_cast<unsigned char>(chunk[i]))) ++i;
      out.push_back(std::string(chunk.substr(start, i - start)));
      continue;
    }
    ++i;
  }
}

}  // namespace

TokenStream tokenize(std::string_view text) {
  const std::string lowered = lowercase_ascii(text);
  std::string_view rest = lowered;
  TokenStream tokens;
  while (!rest.empty()) {
    const auto start = rest.find_first_not_of(" \t\r\n\f\v");
    if (start == std::string_view::npos) break;
    rest.remove_prefix(start);
    auto end = rest.find_first_of(" \t\r\n\f\v");
    if (end == std::string_view::npos) end = rest.size();
    tokenize_chunk(rest.substr(0, end), tokens);
    rest.remove_prefix(end);
  }
  return tokens;
}

bool is_placeholder(std::string_view token) { return token == kUrlToken || token == kMentionToken; }

// ---------------------------------------------------------------------------
// SparseVector
// ---------------------------------------------------------------------------

SparseVector SparseVector::from_pairs(std::size_t dimension, std::vector<std::pair<std::uint32_t, double>> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector v(dimension);
  for (const auto& [index, value] : pairs) {
    if (index >= dimension)
      throw DimensionMismatch("feature index " + std::to_string(index) + " outside dimension " +
                              std::to_string(dimension));
    if (!std::isfinite(value)) throw InvalidArgument("non-finite feature value");
    if (!v.indices_.empty() && v.indices_.back() == index) {
      v.values_.back() += value;
    } else {
      v.indices_.push_back(index);
      v.values_.push_back(value);
    }
  }
  std::size_t w = 0;
  for (std::size_t r = 0; r < v.indices_.size(); ++r) {
    if (v.values_[r] == 0.0) continue;
    v.indices_[w] = v.indices_[r];
    v.values_[w] = v.values_[r];
    ++w;
  }
  v.indices_.resize(w);
  v.values_.resize(w);
  return v;
}

double SparseVector::at(std::uint32_t index) const {
  auto it = std::lower_bound(indices_.begin(), indices_.end(), index);
  if (it == indices_.end() || *it != index) return 0.0;
  return values_[static_cast<std::size_t>(it - indices_.begin())];
}

double SparseVector::sum() const {
  double s = 0.0;
  for (double v : values_) s += v;
  return s;
}

std::strong_ordering SparseVector::compare(const SparseVector& other) const {
  if (auto c = dimension_ <=> other.dimension_; c != 0) return c;
  const std::size_t n = std::min(nnz(), other.nnz());
  for (std::size_t i = 0; i < n; ++i) {
    if (auto c = indices_[i] <=> other.indices_[i]; c != 0) return c;
    if (values_[i] < other.values_[i]) return std::strong_ordering::less;
    if (values_[i] > other.values_[i]) return std::strong_ordering::greater;
  }
  return nnz() <=> other.nnz();
}

// ---------------------------------------------------------------------------
// FeatureSpace
// ---------------------------------------------------------------------------

FeatureSpace::FeatureSpace(std::size_t hash_dims, std::vector<std::string> lexicon_categories)
    : hash_dims_(hash_dims), categories_(std::move(lexicon_categories)) {
  if (hash_dims_ < 2 || (hash_dims_ & (hash_dims_ - 1)) != 0)
    throw InvalidArgument("hash_dims must be a power of two >= 2, got " + std::to_string(hash_dims_));
  if (hash_dims_ + categories_.size() > std::size_t{0x7fffffffu}) throw InvalidArgument("feature space too large");
  std::sort(categories_.begin(), categories_.end());
  categories_.erase(std::unique(categories_.begin(), categories_.end()), categories_.end());
}

std::ptrdiff_t FeatureSpace::category_index(std::string_view category) const {
  auto it = std::lower_bound(categories_.begin(), categories_.end(), category);
  if (it == categories_.end() || *it != category) return -1;
  return static_cast<std::ptrdiff_t>(hash_dims_) + (it - categories_.begin());
}

FeatureSpace rebuild_space(const FeatureSpace& old, const Lexicon& lexicon) {
  return FeatureSpace(old.hash_dims(), lexicon.categories());
}

// ---------------------------------------------------------------------------
// Featurizer
// ---------------------------------------------------------------------------

Featurizer::Featurizer(FeatureSpace space, const Lexicon& lexicon, NegativeFilter filter, FeaturizeOptions options)
    : space_(std::move(space)), filter_(std::move(filter)), options_(options) {
  for (const auto& entry : lexicon.entries()) {
    if (entry.status != EntryStatus::active) continue;
    const auto index = space_.category_index(entry.category);
    if (index < 0)
      throw DimensionMismatch("lexicon category \"" + entry.category + "\" is not in the feature space");
    auto& channels = term_channels_[entry.term];
    const auto idx = static_cast<std::uint32_t>(index);
    if (std::find(channels.begin(), channels.end(), idx) == channels.end()) channels.push_back(idx);
  }
  for (auto& [_, channels] : term_channels_) std::sort(channels.begin(), channels.end());
}

std::span<const std::uint32_t> Featurizer::lexicon_channels(std::string_view token) const {
  auto it = term_channels_.find(std::string(token));
  if (it == term_channels_.end()) return {};
  return it->second;
}

SparseVector Featurizer::operator()(const TokenStream& tokens) const {
  std::vector<std::pair<std::uint32_t, double>> pairs;
  pairs.reserve(tokens.size() * 2);
  std::vector<std::uint32_t> lexicon_hits;
  for (const auto& token : tokens) {
    if (!filter_.contains(token)) pairs.emplace_back(space_.bucket(token), 1.0);
    for (auto channel : lexicon_channels(token)) {
      if (options_.binary_lexicon) {
        if (std::find(lexicon_hits.begin(), lexicon_hits.end(), channel) != lexicon_hits.end()) continue;
        lexicon_hits.push_back(channel);
      }
      pairs.emplace_back(channel, 1.0);
    }
  }
  return SparseVector::from_pairs(space_.dimension(), std::move(pairs));
}

SparseVector featurize(const TokenStream& tokens, const FeatureSpace& space, const Lexicon& lexicon,
                       const NegativeFilter& filter, FeaturizeOptions options) {
  return Featurizer(space, lexicon, filter, options)(tokens);
}

}  // namespace activelex
