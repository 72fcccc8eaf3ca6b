#include "msens/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msens/error.hpp"

namespace msens {

double cross_entropy(std::span<const double> probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.size())
        throw InvalidArgument("cross_entropy: label " + std::to_string(label) + " out of range");
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("cross_entropy: entries must lie in [0, 1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("cross_entropy: probabilities do not sum to 1");
    return -std::log(std::clamp(probs[static_cast<std::size_t>(label)], kProbabilityFloor, 1.0));
}

}  // namespace msens
