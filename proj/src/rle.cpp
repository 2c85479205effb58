#include "octasam/rle.hpp"

#include <string>

#include "octasam/errors.hpp"

namespace octasam::rle {

Encoded encode(const Mask& mask) {
    Encoded out{mask.height(), mask.width(), {}};
    std::uint8_t current = 0;
    std::uint32_t run = 0;
    for (const auto v : mask.data()) {
        const std::uint8_t bit = v ? 1 : 0;
        if (bit != current) {
            out.runs.push_back(run);
            run = 0;
            current = bit;
        }
        ++run;
    }
    out.runs.push_back(run);
    return out;
}

Mask decode(const Encoded& encoded) {
    if (encoded.height < 0 || encoded.width < 0) throw ParseError("negative mask size");
    const auto total = static_cast<std::uint64_t>(encoded.height) * static_cast<std::uint64_t>(encoded.width);
    std::uint64_t sum = 0;
    for (const auto r : encoded.runs) sum += r;
    if (sum != total)
        throw ParseError("run lengths cover " + std::to_string(sum) + " pixels, expected " + std::to_string(total));
    Mask out(encoded.height, encoded.width);
    std::size_t at = 0;
    std::uint8_t value = 0;
    for (const auto r : encoded.runs) {
        for (std::uint32_t i = 0; i < r; ++i) out.data()[at++] = value;
        value ^= 1;
    }
    return out;
}

}  // namespace octasam::rle
