#include <doctest.h>

#include <map>

#include "activelex/error.hpp"
#include "activelex/features.hpp"
#include "activelex/rng.hpp"

using namespace activelex;

namespace {

using Tokens = std::vector<std::string>;

// Independent oracle: the 64-bit FNV-1a reference values for short strings.
static_assert(fnv1a64("") == 0xcbf29ce484222325ULL);
static_assert(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
static_assert(fnv1a64("foobar") == 0x85944171f73967e8ULL);

Lexicon sentiment_lexicon() {
  Lexicon lex;
  lex.accept("good", "positive");
  lex.accept("great", "positive");
  lex.accept("bad", "negative");
  return lex;
}

}  // namespace

TEST_CASE("tokenizer normalizes URLs, mentions and hashtags") {
  CHECK(tokenize("Check http://t.co/x #Great @bob!") == Tokens{"check", "<url>", "great", "<mention>"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("LOVE love") == Tokens{"love", "love"});
  CHECK(tokenize("see www.example.com now") == Tokens{"see", "<url>", "now"});
  CHECK(tokenize("HTTPS://X.Y/z") == Tokens{"<url>"});
  CHECK(tokenize("it's   great,really") == Tokens{"it", "s", "great", "really"});
  CHECK(tokenize("email a@b") == Tokens{"email", "a", "<mention>"});
  CHECK(tokenize("@ alone") == Tokens{"alone"});
  CHECK(tokenize("caf\xc3\xa9 #\xc3\xa9t\xc3\xa9") == Tokens{"caf\xc3\xa9", "\xc3\xa9t\xc3\xa9"});
}

TEST_CASE("tokens are never empty and only placeholders contain angle brackets") {
  Rng rng(3);
  const std::string alphabet = "aB3 _#@!.,:/<>\t\nhttp://www.\xc3\xa9";
  for (int i = 0; i < 500; ++i) {
    std::string text;
    const auto n = rng.below(40);
    for (std::uint64_t j = 0; j < n; ++j) text += alphabet[rng.below(alphabet.size())];
    for (const auto& t : tokenize(text)) {
      CHECK_FALSE(t.empty());
      if (t.find('<') != std::string::npos) CHECK(is_placeholder(t));
      for (unsigned char c : t) CHECK_FALSE((c >= 'A' && c <= 'Z'));
    }
  }
}

TEST_CASE("sparse vectors canonicalize their entries") {
  const auto v = SparseVector::from_pairs(10, {{5, 1.0}, {2, 2.0}, {5, 2.0}, {7, 0.0}, {3, 1.0}, {3, -1.0}});
  CHECK(std::vector<std::uint32_t>(v.indices().begin(), v.indices().end()) == std::vector<std::uint32_t>{2, 5});
  CHECK(v.at(5) == 3.0);
  CHECK(v.at(3) == 0.0);
  CHECK(v.sum() == 5.0);
  CHECK_THROWS_AS(SparseVector::from_pairs(4, {{4, 1.0}}), Error);
  CHECK_THROWS(SparseVector::from_pairs(4, {{1, std::numeric_limits<double>::infinity()}}));
}

TEST_CASE("feature space layout") {
  const FeatureSpace space(16, {"negative", "positive"});
  CHECK(space.dimension() == 18);
  CHECK(space.category_index("negative") == 16);
  CHECK(space.category_index("positive") == 17);
  CHECK(space.category_index("other") == -1);
  CHECK(space.bucket("good") == (fnv1a64("good") & 15));
  CHECK_THROWS(FeatureSpace(12, {}));
  CHECK_THROWS(FeatureSpace(1, {}));
}

TEST_CASE("term counts and lexicon channels") {
  const auto lex = sentiment_lexicon();
  const FeatureSpace space(1024, lex.categories());
  const auto v = featurize({"good", "good"}, space, lex, {});
  CHECK(v.at(space.bucket("good")) == 2.0);
  CHECK(v.at(static_cast<std::uint32_t>(space.category_index("positive"))) == 2.0);
  CHECK(v.nnz() == 2);

  const auto filtered = featurize({"obama"}, space, lex, NegativeFilter({"obama"}));
  CHECK(filtered.empty());
  CHECK(filtered.dimension() == space.dimension());

  FeaturizeOptions binary;
  binary.binary_lexicon = true;
  CHECK(featurize({"good", "great"}, space, lex, {}, binary).at(space.category_index("positive")) == 1.0);
}

TEST_CASE("colliding tokens share a bucket") {
  // Brute-force a collision in a small space with the reference hash, then
  // check the featurizer adds them into one bucket.
  const std::size_t dims = 64;
  std::map<std::uint64_t, std::string> seen;
  std::string a, b;
  for (int i = 0; i < 1000 && a.empty(); ++i) {
    const auto word = "w" + std::to_string(i);
    const auto bucket = fnv1a64(word) % dims;
    if (auto it = seen.find(bucket); it != seen.end()) {
      a = it->second;
      b = word;
    }
    seen.emplace(bucket, word);
  }
  REQUIRE_FALSE(a.empty());
  const FeatureSpace space(dims, {});
  const auto v = featurize({a, b}, space, {}, {});
  CHECK(v.nnz() == 1);
  CHECK(v.at(space.bucket(a)) == 2.0);
}

TEST_CASE("stale spaces are detected") {
  const auto lex = sentiment_lexicon();
  const FeatureSpace stale(256, {"positive"});
  CHECK_THROWS_AS(featurize({"bad"}, stale, lex, {}), DimensionMismatch);
}

TEST_CASE("rebuild_space follows the lexicon") {
  auto lex = sentiment_lexicon();
  const FeatureSpace space(256, lex.categories());
  CHECK(rebuild_space(space, lex) == space);
  lex.accept("yeah right", "sarcasm");
  const auto grown = rebuild_space(space, lex);
  CHECK(grown.dimension() == space.dimension() + 1);
  CHECK(grown.category_index("negative") == space.category_index("negative"));
  lex.accept("meh", "bland");
  const auto shifted = rebuild_space(grown, lex);
  CHECK(shifted.category_index("bland") == 256);
  CHECK(shifted.category_index("negative") == 257);
  for (const auto& [t, c] : std::vector<std::pair<std::string, std::string>>{
           {"good", "positive"}, {"great", "positive"}, {"bad", "negative"}, {"yeah right", "sarcasm"}, {"meh", "bland"}})
    lex.reject(t, c);
  CHECK(rebuild_space(shifted, lex).dimension() == 256);
}

TEST_CASE("featurization invariants on random token streams") {
  Rng rng(17);
  const std::vector<std::string> vocab{"good", "bad", "great", "meh", "ok", "obama", "<url>", "fine", "awful", "x"};
  const auto lex = sentiment_lexicon();
  const FeatureSpace space(32, lex.categories());
  for (int trial = 0; trial < 300; ++trial) {
    Tokens tokens;
    for (std::uint64_t i = 0, n = rng.below(20); i < n; ++i) tokens.push_back(vocab[rng.below(vocab.size())]);
    NegativeFilter filter;
    for (const auto& w : vocab)
      if (rng.below(4) == 0) filter.add(w);

    const auto v = featurize(tokens, space, lex, filter);
    CHECK(v == featurize(tokens, space, lex, filter));

    // L1 mass of the hash block equals the number of unfiltered tokens.
    double unigram_mass = 0;
    for (std::size_t i = 0; i < v.nnz(); ++i)
      if (v.indices()[i] < space.hash_dims()) unigram_mass += v.values()[i];
    std::size_t unfiltered = 0;
    for (const auto& t : tokens) unfiltered += !filter.contains(t);
    CHECK(unigram_mass == static_cast<double>(unfiltered));

    // Lexicon channel value equals a brute-force scan.
    for (const auto& cat : space.lexicon_categories()) {
      std::size_t count = 0;
      for (const auto& t : tokens)
        for (const auto& e : lex.entries())
          count += e.term == t && e.category == cat && e.status == EntryStatus::active;
      CHECK(v.at(static_cast<std::uint32_t>(space.category_index(cat))) == static_cast<double>(count));
    }

    // Adding a filter term never increases a unigram bucket.
    auto wider = filter;
    wider.add(vocab[rng.below(vocab.size())]);
    const auto w = featurize(tokens, space, lex, wider);
    for (std::uint32_t j = 0; j < space.hash_dims(); ++j) CHECK(w.at(j) <= v.at(j));
  }
}
