#pragma once

#include <cstddef>
#include <span>
#include <string>

namespace activelex {

/// Micro-averaged F1: 2·TP / (2·TP + FP + FN) summed over classes.
/// Throws InvalidArgument on empty input or a length mismatch.
double micro_f1(std::span<const std::size_t> predictions, std::span<const std::size_t> golds);
double micro_f1(std::span<const std::string> predictions, std::span<const std::string> golds);

/// Fraction of positions where prediction == gold.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> golds);

}  // namespace activelex
