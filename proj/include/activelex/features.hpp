#pragma once

#include <cstddef>
#include <compare>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "activelex/corpus.hpp"

namespace activelex {

inline constexpr std::string_view kUrlToken = "<url>";
inline constexpr std::string_view kMentionToken = "<mention>";
inline constexpr std::string_view kHashFunctionId = "fnv1a64";
inline constexpr std::size_t kDefaultHashDims = std::size_t{1} << 18;

using TokenStream = std::vector<std::string>;

/// Lowercases and splits a post into tokens. URLs become "<url>", @handles
/// become "<mention>", and hashtags keep their bare word.
TokenStream tokenize(std::string_view text);

bool is_placeholder(std::string_view token);

/// 64-bit FNV-1a over the raw bytes. Part of the persisted-model contract.
constexpr std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Sparse feature vector with strictly increasing indices and no stored zeros.
class SparseVector {
 public:
  SparseVector() = default;
  explicit SparseVector(std::size_t dimension) : dimension_(dimension) {}

  /// Builds from unsorted (index, value) pairs; duplicates are summed, zeros dropped.
  static SparseVector from_pairs(std::size_t dimension, std::vector<std::pair<std::uint32_t, double>> pairs);

  std::size_t dimension() const { return dimension_; }
  std::size_t nnz() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  std::span<const std::uint32_t> indices() const { return indices_; }
  std::span<const double> values() const { return values_; }

  /// Value at `index` (0 when absent).
  double at(std::uint32_t index) const;
  double sum() const;

  bool operator==(const SparseVector&) const = default;
  /// Lexicographic order over (indices, values); used to canonicalize training batches.
  std::strong_ordering compare(const SparseVector& other) const;

 private:
  std::size_t dimension_ = 0;
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
};

/// Fixed unigram hash block followed by one channel per lexicon category.
class FeatureSpace {
 public:
  FeatureSpace() : FeatureSpace(kDefaultHashDims, {}) {}
  FeatureSpace(std::size_t hash_dims, std::vector<std::string> lexicon_categories);

  std::size_t hash_dims() const { return hash_dims_; }
  const std::vector<std::string>& lexicon_categories() const { return categories_; }
  std::size_t dimension() const { return hash_dims_ + categories_.size(); }

  std::uint32_t bucket(std::string_view token) const {
    return static_cast<std::uint32_t>(fnv1a64(token) & (hash_dims_ - 1));
  }
  /// Feature index of a lexicon category, or -1 when absent.
  std::ptrdiff_t category_index(std::string_view category) const;

  bool operator==(const FeatureSpace&) const = default;

 private:
  std::size_t hash_dims_;
  std::vector<std::string> categories_;
};

/// Same hash block; lexicon channels = the lexicon's current categories.
FeatureSpace rebuild_space(const FeatureSpace& old, const Lexicon& lexicon);

struct FeaturizeOptions {
  bool binary_lexicon = false;
};

/// Precomputes the term → channel index so that many texts can be featurized
/// against one (space, lexicon, filter) triple.
class Featurizer {
 public:
  Featurizer(FeatureSpace space, const Lexicon& lexicon, NegativeFilter filter, FeaturizeOptions options = {});

  SparseVector operator()(const TokenStream& tokens) const;
  const FeatureSpace& space() const { return space_; }
  const NegativeFilter& filter() const { return filter_; }
  /// Lexicon channel indices hit by `token` (empty when none).
  std::span<const std::uint32_t> lexicon_channels(std::string_view token) const;

 private:
  FeatureSpace space_;
  NegativeFilter filter_;
  FeaturizeOptions options_;
  std::unordered_map<std::string, std::vector<std::uint32_t>> term_channels_;
};

/// Raw term-frequency featurization. Throws DimensionMismatch when the lexicon
/// has an active category that the space does not know about.
SparseVector featurize(const TokenStream& tokens, const FeatureSpace& space, const Lexicon& lexicon,
                       const NegativeFilter& filter, FeaturizeOptions options = {});

}  // namespace activelex
