#pragma once

#include <span>

namespace msens {

/// Probabilities below this are clamped before taking the logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

/// -ln(clamp(probs[label], 1e-12, 1)). Throws InvalidArgument unless probs is
/// a probability vector (entries in [0, 1], sum within 1e-9 of 1).
double cross_entropy(std::span<const double> probs, int label);

}  // namespace msens
