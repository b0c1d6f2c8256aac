#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace activelex {

enum class Split { train, dev, test };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view name);

struct Instance {
  std::string id;
  std::string text;
  std::optional<std::string> gold_label;

  bool operator==(const Instance&) const = default;
};

/// A labeled corpus with train/dev/test splits.
///
/// `label_set` is always sorted lexicographically so that class indices are
/// stable across runs. Instances keep their file order within each split.
struct Dataset {
  std::string name;
  std::vector<std::string> label_set;
  std::map<Split, std::vector<Instance>> splits;

  const std::vector<Instance>& split(Split s) const;
  std::size_t size() const;
  /// Index of `label` in `label_set`, or nullopt.
  std::optional<std::size_t> label_index(std::string_view label) const;

  bool operator==(const Dataset&) const = default;
};

enum class DatasetFormat { jsonl, csv };

/// Picks the format from the file extension (".csv" → csv, anything else → jsonl).
DatasetFormat format_from_path(const std::filesystem::path& path);

/// Loads a dataset. When `declared_labels` is given, any label outside it is an
/// error and the declared labels are all part of the label set.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::optional<std::vector<std::string>>& declared_labels = std::nullopt);

/// Parses dataset text already in memory. `source` names the input in errors.
Dataset parse_dataset(std::string_view content, DatasetFormat format, std::string name,
                      const std::optional<std::vector<std::string>>& declared_labels = std::nullopt);

/// Builds a dataset from instances, canonicalizing the label set and
/// checking id uniqueness.
Dataset make_dataset(std::string name, std::map<Split, std::vector<Instance>> splits,
                     const std::optional<std::vector<std::string>>& declared_labels = std::nullopt);

void write_dataset(const Dataset& dataset, const std::filesystem::path& path,
                   DatasetFormat format = DatasetFormat::jsonl);
std::string serialize_dataset(const Dataset& dataset, DatasetFormat format = DatasetFormat::jsonl);

// ---------------------------------------------------------------------------
// Lexicon
// ---------------------------------------------------------------------------

enum class EntryStatus { active, rejected };

struct LexiconEntry {
  std::string term;
  std::string category;
  EntryStatus status = EntryStatus::active;

  bool operator==(const LexiconEntry&) const = default;
};

/// Term → category word list. (term, category) pairs are unique.
class Lexicon {
 public:
  Lexicon() = default;

  /// Adds (term, category) as active, or re-activates a rejected entry.
  /// Returns true when the lexicon changed.
  bool accept(std::string_view term, std::string_view category);
  /// Marks (term, category) rejected, inserting a rejected entry if absent.
  /// Returns true when the lexicon changed.
  bool reject(std::string_view term, std::string_view category);
  /// Declares a category that exists even without active entries.
  void declare_category(std::string_view category);

  const std::vector<LexiconEntry>& entries() const { return entries_; }
  const std::set<std::string>& declared_categories() const { return declared_; }

  /// Categories of active entries plus declared categories, sorted.
  std::vector<std::string> categories() const;

  /// Active categories for a single token, sorted; empty when none.
  std::vector<std::string> categories_of(std::string_view token) const;

  std::size_t active_size() const;

  bool operator==(const Lexicon&) const = default;

 private:
  std::vector<LexiconEntry>::iterator find(std::string_view term, std::string_view category);

  std::vector<LexiconEntry> entries_;
  std::set<std::string> declared_;
};

/// Reads a `word,sentiment` CSV (extra columns ignored). Terms are lowercased
/// and duplicates collapsed.
Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon parse_lexicon(std::string_view csv_content);

/// Terms that must never become unigram features.
class NegativeFilter {
 public:
  NegativeFilter() = default;
  explicit NegativeFilter(std::set<std::string> terms) : terms_(std::move(terms)) {}

  bool contains(std::string_view term) const { return terms_.find(std::string(term)) != terms_.end(); }
  /// Returns true when the term was not already present.
  bool add(std::string_view term);
  const std::set<std::string>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  bool operator==(const NegativeFilter&) const = default;

 private:
  std::set<std::string> terms_;
};

/// One lowercase term per line; blank lines and `#` comments are skipped.
NegativeFilter load_negative_filter(const std::filesystem::path& path);
NegativeFilter parse_negative_filter(std::string_view content);

// ---------------------------------------------------------------------------
// Split manifests
// ---------------------------------------------------------------------------

using Manifest = std::map<Split, std::size_t>;

/// Parses `split=count` lines (`#` comments allowed).
Manifest parse_manifest(std::string_view content);
Manifest load_manifest(const std::filesystem::path& path);

struct ManifestRow {
  Split split;
  std::size_t expected = 0;
  std::size_t actual = 0;
  bool pass = false;
};

struct ManifestReport {
  std::vector<ManifestRow> rows;
  bool all_pass() const;
  std::string to_string() const;
};

ManifestReport validate_manifest(const Dataset& dataset, const Manifest& manifest);

std::string lowercase_ascii(std::string_view s);
std::string read_file(const std::filesystem::path& path);

}  // namespace activelex
