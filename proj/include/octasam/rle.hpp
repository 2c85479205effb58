#pragma once

#include <cstdint>
#include <vector>

#include "octasam/image.hpp"

namespace octasam::rle {

/// Row-major run lengths of a binary mask, alternating background/foreground and always
/// starting with a (possibly zero-length) background run. Nonzero pixels count as foreground.
struct Encoded {
    int height = 0;
    int width = 0;
    std::vector<std::uint32_t> runs;

    friend bool operator==(const Encoded&, const Encoded&) = default;
};

Encoded encode(const Mask& mask);

/// Throws ParseError unless the runs cover exactly height * width pixels.
Mask decode(const Encoded& encoded);

}  // namespace octasam::rle
