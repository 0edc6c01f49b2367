#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace mdiqa {

/// One of the 8 symmetries of the square: rotation by quarter_turns * 90
/// degrees counter-clockwise, preceded by a horizontal flip when `flip`.
struct Dihedral {
    int quarter_turns = 0;
    bool flip = false;

    static Dihedral from_index(int index); ///< index in [0, 8)
    int index() const { return quarter_turns + (flip ? 4 : 0); }
    bool is_identity() const { return quarter_turns == 0 && !flip; }
};

/// Applies `t` to a square row-major image of the given side length.
std::vector<double> apply_dihedral(std::span<const double> image, std::size_t side, Dihedral t);

/// Draws one of the 8 transforms uniformly and applies it. Throws DomainError
/// when the pixel count is not a perfect square.
std::vector<double> augment(std::span<const double> image, std::mt19937_64& rng);

Dihedral draw_dihedral(std::mt19937_64& rng);

} // namespace mdiqa
