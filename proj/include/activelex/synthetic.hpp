#pragma once

#include <cstddef>
#include <cstdint>

#include "activelex/corpus.hpp"

namespace activelex {

/// Seeded corpus with class-conditional token distributions.
///
/// Every class has `vocab_per_class` words; a fraction `overlap` of them is a
/// pool shared by all classes (each class ranks the shared words in its own
/// random order). The class-specific words are split into `subtopics`
/// blocks whose prior falls off as 1/(s+1)^subtopic_exponent, so some
/// subtopics are rare. A document picks a class and a subtopic, then draws
/// each token from the class's shared-word Zipf law with probability
/// `shared_mass` and from the subtopic's Zipf law otherwise. With probability
/// `background` a token is instead uniform over all words.
struct SyntheticSpec {
  std::size_t classes = 3;
  std::size_t train = 2000;
  std::size_t dev = 0;
  std::size_t test = 500;
  std::size_t vocab_per_class = 300;
  double overlap = 0.2;
  double zipf_exponent = 1.0;
  std::size_t subtopics = 1;
  double subtopic_exponent = 1.0;
  double shared_mass = 0.2;
  double background = 0.3;
  std::size_t min_tokens = 3;
  std::size_t max_tokens = 8;
  std::uint64_t seed = 1;
};

Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace activelex
