#include "mdiqa/augment.hpp"

#include "mdiqa/errors.hpp"

#include <cmath>

namespace mdiqa {

Dihedral Dihedral::from_index(int index) {
    if (index < 0 || index >= 8)
        throw DomainError("dihedral index must lie in [0, 8)");
    return {index % 4, index >= 4};
}

std::vector<double> apply_dihedral(std::span<const double> image, std::size_t side, Dihedral t) {
    if (image.size() != side * side)
        throw DomainError("augment: image is not square");
    std::vector<double> out(image.size());
    const auto last = side - 1;
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            std::size_t sx = t.flip ? last - x : x;
            std::size_t sy = y;
            // Counter-clockwise quarter turn: (x, y) -> (y, last - x).
            for (int r = 0; r < t.quarter_turns; ++r) {
                const auto nx = sy;
                const auto ny = last - sx;
                sx = nx;
                sy = ny;
            }
            out[sy * side + sx] = image[y * side + x];
        }
    return out;
}

Dihedral draw_dihedral(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dist(0, 7);
    return Dihedral::from_index(dist(rng));
}

std::vector<double> augment(std::span<const double> image, std::mt19937_64& rng) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(image.size()))));
    if (side * side != image.size() || side == 0)
        throw DomainError("augment: image is not square (" + std::to_string(image.size()) + " pixels)");
    return apply_dihedral(image, side, draw_dihedral(rng));
}

} // namespace mdiqa
