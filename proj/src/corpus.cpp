#include "activelex/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "activelex/error.hpp"
#include "csv.hpp"

namespace activelex {

using json = nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  return std::nullopt;
}

std::string lowercase_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

static std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

const std::vector<Instance>& Dataset::split(Split s) const {
  static const std::vector<Instance> empty;
  auto it = splits.find(s);
  return it == splits.end() ? empty : it->second;
}

std::size_t Dataset::size() const {
  std::size_t n = 0;
  for (const auto& [_, instances] : splits) n += instances.size();
  return n;
}

std::optional<std::size_t> Dataset::label_index(std::string_view label) const {
  auto it = std::lower_bound(label_set.begin(), label_set.end(), label);
  if (it == label_set.end() || *it != label) return std::nullopt;
  return static_cast<std::size_t>(it - label_set.begin());
}

DatasetFormat format_from_path(const std::filesystem::path& path) {
  return lowercase_ascii(path.extension().string()) == ".csv" ? DatasetFormat::csv : DatasetFormat::jsonl;
}

Dataset make_dataset(std::string name, std::map<Split, std::vector<Instance>> splits,
                     const std::optional<std::vector<std::string>>& declared_labels) {
  Dataset ds;
  ds.name = std::move(name);
  std::set<std::string> labels;
  std::set<std::string> declared;
  if (declared_labels) declared.insert(declared_labels->begin(), declared_labels->end());
  std::set<std::string> ids;
  std::size_t total = 0;
  for (const auto& [split, instances] : splits) {
    for (const auto& inst : instances) {
      if (inst.id.empty()) throw DataError("instance with empty id in split " + std::string(to_string(split)));
      if (!ids.insert(inst.id).second) throw DataError("duplicate instance id \"" + inst.id + "\"");
      if (inst.gold_label) {
        if (inst.gold_label->empty()) throw DataError("instance \"" + inst.id + "\" has an empty label");
        if (declared_labels && !declared.count(*inst.gold_label))
          throw DataError("instance \"" + inst.id + "\" has label \"" + *inst.gold_label +
                          "\" outside the declared label set");
        labels.insert(*inst.gold_label);
      }
      ++total;
    }
  }
  if (total == 0) throw DataError("no instances");
  labels.insert(declared.begin(), declared.end());
  ds.label_set.assign(labels.begin(), labels.end());
  ds.splits = std::move(splits);
  return ds;
}

namespace {

struct RawRecord {
  Instance instance;
  Split split = Split::train;
};

Split split_or_throw(std::string_view value, std::size_t row) {
  if (value.empty()) return Split::train;
  auto s = parse_split(value);
  if (!s) throw DataError("row " + std::to_string(row) + ": unknown split \"" + std::string(value) + "\"");
  return *s;
}

std::vector<RawRecord> parse_jsonl(std::string_view content) {
  std::vector<RawRecord> out;
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    std::string_view line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++row;
    if (trim(line).empty()) {
      if (nl == content.size()) break;
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("row " + std::to_string(row) + ": malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object()) throw DataError("row " + std::to_string(row) + ": expected a JSON object");
    auto string_field = [&](const char* key, bool required) -> std::optional<std::string> {
      auto it = obj.find(key);
      if (it == obj.end() || it->is_null()) {
        if (required) throw DataError("row " + std::to_string(row) + ": missing field \"" + key + "\"");
        return std::nullopt;
      }
      if (!it->is_string())
        throw DataError("row " + std::to_string(row) + ": field \"" + key + "\" must be a string");
      return it->get<std::string>();
    };
    RawRecord rec;
    rec.instance.id = *string_field("id", true);
    rec.instance.text = *string_field("text", true);
    rec.instance.gold_label = string_field("label", false);
    if (rec.instance.id.empty()) throw DataError("row " + std::to_string(row) + ": empty id");
    rec.split = split_or_throw(string_field("split", false).value_or(""), row);
    out.push_back(std::move(rec));
    if (nl == content.size()) break;
  }
  return out;
}

std::vector<RawRecord> parse_csv_dataset(std::string_view content) {
  auto records = detail::parse_csv(content);
  if (records.empty()) return {};
  const auto& header = records.front().fields;
  auto column = [&](std::string_view name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (lowercase_ascii(trim(header[i])) == name) return i;
    return std::nullopt;
  };
  auto id_col = column("id");
  auto text_col = column("text");
  if (!id_col || !text_col) throw DataError("row 1: CSV header must contain id and text columns");
  auto label_col = column("label");
  auto split_col = column("split");

  std::vector<RawRecord> out;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& fields = records[r].fields;
    const std::size_t row = records[r].line;
    if (fields.size() != header.size())
      throw DataError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                      " fields, got " + std::to_string(fields.size()));
    RawRecord rec;
    rec.instance.id = fields[*id_col];
    rec.instance.text = fields[*text_col];
    if (rec.instance.id.empty()) throw DataError("row " + std::to_string(row) + ": empty id");
    if (label_col && !fields[*label_col].empty()) rec.instance.gold_label = fields[*label_col];
    rec.split = split_or_throw(split_col ? trim(fields[*split_col]) : std::string(), row);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

Dataset parse_dataset(std::string_view content, DatasetFormat format, std::string name,
                      const std::optional<std::vector<std::string>>& declared_labels) {
  auto records = format == DatasetFormat::jsonl ? parse_jsonl(content) : parse_csv_dataset(content);
  if (records.empty()) throw DataError("no instances");
  std::map<Split, std::vector<Instance>> splits;
  for (auto& rec : records) splits[rec.split].push_back(std::move(rec.instance));
  return make_dataset(std::move(name), std::move(splits), declared_labels);
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const std::optional<std::vector<std::string>>& declared_labels) {
  if (!std::filesystem::exists(path)) throw DataError("dataset file not found: " + path.string());
  try {
    return parse_dataset(read_file(path), format, path.stem().string(), declared_labels);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string serialize_dataset(const Dataset& dataset, DatasetFormat format) {
  std::string out;
  if (format == DatasetFormat::csv) out += "id,text,label,split\n";
  for (const auto& [split, instances] : dataset.splits) {
    for (const auto& inst : instances) {
      if (format == DatasetFormat::jsonl) {
        json obj = {{"id", inst.id}, {"text", inst.text}};
        if (inst.gold_label) obj["label"] = *inst.gold_label;
        obj["split"] = std::string(to_string(split));
        out += obj.dump();
      } else {
        out += detail::csv_escape(inst.id) + "," + detail::csv_escape(inst.text) + "," +
               detail::csv_escape(inst.gold_label.value_or("")) + "," + std::string(to_string(split));
      }
      out += '\n';
    }
  }
  return out;
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path, DatasetFormat format) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize_dataset(dataset, format);
}

// ---------------------------------------------------------------------------
// Lexicon
// ---------------------------------------------------------------------------

std::vector<LexiconEntry>::iterator Lexicon::find(std::string_view term, std::string_view category) {
  return std::find_if(entries_.begin(), entries_.end(),
                      [&](const LexiconEntry& e) { return e.term == term && e.category == category; });
}

bool Lexicon::accept(std::string_view term_in, std::string_view category) {
  const std::string term = lowercase_ascii(trim(term_in));
  if (term.empty()) throw InvalidArgument("lexicon term must be nonempty");
  if (category.empty()) throw InvalidArgument("lexicon category must be nonempty");
  auto it = find(term, category);
  if (it == entries_.end()) {
    entries_.push_back({term, std::string(category), EntryStatus::active});
    return true;
  }
  if (it->status == EntryStatus::active) return false;
  it->status = EntryStatus::active;
  return true;
}

bool Lexicon::reject(std::string_view term_in, std::string_view category) {
  const std::string term = lowercase_ascii(trim(term_in));
  if (term.empty()) throw InvalidArgument("lexicon term must be nonempty");
  if (category.empty()) throw InvalidArgument("lexicon category must be nonempty");
  auto it = find(term, category);
  if (it == entries_.end()) {
    entries_.push_back({term, std::string(category), EntryStatus::rejected});
    return true;
  }
  if (it->status == EntryStatus::rejected) return false;
  it->status = EntryStatus::rejected;
  return true;
}

void Lexicon::declare_category(std::string_view category) {
  if (category.empty()) throw InvalidArgument("lexicon category must be nonempty");
  declared_.insert(std::string(category));
}

std::vector<std::string> Lexicon::categories() const {
  std::set<std::string> cats = declared_;
  for (const auto& e : entries_)
    if (e.status == EntryStatus::active) cats.insert(e.category);
  return {cats.begin(), cats.end()};
}

std::vector<std::string> Lexicon::categories_of(std::string_view token) const {
  std::vector<std::string> out;
  for (const auto& e : entries_)
    if (e.status == EntryStatus::active && e.term == token) out.push_back(e.category);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t Lexicon::active_size() const {
  return static_cast<std::size_t>(
      std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.status == EntryStatus::active; }));
}

Lexicon parse_lexicon(std::string_view csv_content) {
  auto records = detail::parse_csv(csv_content);
  if (records.empty()) throw DataError("lexicon: missing header with columns word,sentiment");
  const auto& header = records.front().fields;
  std::optional<std::size_t> word_col, sentiment_col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = lowercase_ascii(trim(header[i]));
    if (name == "word" && !word_col) word_col = i;
    if (name == "sentiment" && !sentiment_col) sentiment_col = i;
  }
  if (!word_col || !sentiment_col) throw DataError("lexicon: header must contain columns word and sentiment");

  Lexicon lex;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& fields = records[r].fields;
    const auto need = std::max(*word_col, *sentiment_col);
    if (fields.size() <= need)
      throw DataError("lexicon row " + std::to_string(records[r].line) + ": too few fields");
    const std::string term = lowercase_ascii(trim(fields[*word_col]));
    const std::string category = trim(fields[*sentiment_col]);
    if (term.empty()) throw DataError("lexicon row " + std::to_string(records[r].line) + ": empty term");
    if (category.empty()) throw DataError("lexicon row " + std::to_string(records[r].line) + ": empty category");
    lex.accept(term, category);
  }
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  try {
    return parse_lexicon(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

bool NegativeFilter::add(std::string_view term) {
  const std::string t = lowercase_ascii(trim(term));
  if (t.empty()) throw InvalidArgument("filter term must be nonempty");
  return terms_.insert(t).second;
}

NegativeFilter parse_negative_filter(std::string_view content) {
  NegativeFilter filter;
  std::istringstream in{std::string(content)};
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto t = trim(line);
    if (!t.empty()) filter.add(t);
  }
  return filter;
}

NegativeFilter load_negative_filter(const std::filesystem::path& path) { return parse_negative_filter(read_file(path)); }

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

Manifest parse_manifest(std::string_view content) {
  Manifest manifest;
  std::istringstream in{std::string(content)};
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("manifest line " + std::to_string(row) + ": expected split=count");
    auto split = parse_split(trim(line.substr(0, eq)));
    if (!split) throw DataError("manifest line " + std::to_string(row) + ": unknown split");
    const std::string value = trim(line.substr(eq + 1));
    std::size_t used = 0;
    unsigned long long count = 0;
    try {
      count = std::stoull(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (value.empty() || used != value.size() || value.front() == '-')
      throw DataError("manifest line " + std::to_string(row) + ": count must be a non-negative integer");
    manifest[*split] = static_cast<std::size_t>(count);
  }
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

bool ManifestReport::all_pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const ManifestRow& r) { return r.pass; });
}

std::string ManifestReport::to_string() const {
  std::ostringstream out;
  out << "split,expected,actual,status\n";
  for (const auto& r : rows)
    out << activelex::to_string(r.split) << ',' << r.expected << ',' << r.actual << ',' << (r.pass ? "pass" : "fail")
        << '\n';
  return out.str();
}

ManifestReport validate_manifest(const Dataset& dataset, const Manifest& manifest) {
  ManifestReport report;
  for (const auto& [split, expected] : manifest) {
    const std::size_t actual = dataset.split(split).size();
    report.rows.push_back({split, expected, actual, expected == actual});
  }
  return report;
}

}  // namespace activelex
