#include "rydnet/random.hpp"

#include <limits>
#include <stdexcept>

namespace rydnet {

std::size_t Rng::index(std::size_t n)
{
    if (n == 0)
        throw std::invalid_argument("Rng::index: empty range");
    const std::uint64_t range = static_cast<std::uint64_t>(n);
    // Rejection on the top partial bucket keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x = engine_();
    while (x >= limit)
        x = engine_();
    return static_cast<std::size_t>(x % range);
}

} // namespace rydnet
