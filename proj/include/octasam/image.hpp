#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace octasam {

/// Pixel coordinate. x is the column, y is the row.
struct Point {
    int x = 0;
    int y = 0;
    friend bool operator==(const Point&, const Point&) = default;
    friend auto operator<=>(const Point& a, const Point& b) {
        if (auto c = a.y <=> b.y; c != 0) return c;
        return a.x <=> b.x;
    }
};

/// Continuous coordinate in pixel units; integer values are pixel centers.
struct PointF {
    double x = 0.0;
    double y = 0.0;
};

/// Inclusive pixel bounding box.
struct BBox {
    int x0 = 0;
    int y0 = 0;
    int x1 = -1;
    int y1 = -1;
    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Interleaved H x W x C image of doubles, row-major.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, double fill = 0.0);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
    double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    /// One channel as a height x width matrix.
    Eigen::MatrixXd channel(int c) const;
    void set_channel(int c, const Eigen::MatrixXd& values);

    bool all_finite_in_unit_range() const;

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Label mask; binary {0,1} or artery/vein classes {0,1,2}.
class Mask {
public:
    Mask() = default;
    Mask(int height, int width, std::uint8_t fill = 0);

    int height() const { return height_; }
    int width() const { return width_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    std::uint8_t& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

    std::vector<std::uint8_t>& data() { return data_; }
    const std::vector<std::uint8_t>& data() const { return data_; }

    std::size_t count_nonzero() const;
    std::size_t count_value(std::uint8_t v) const;
    std::uint8_t max_value() const;
    bool is_binary() const { return max_value() <= 1; }

    /// Binary mask of pixels equal to `value`.
    Mask select(std::uint8_t value) const;

    Eigen::MatrixXd to_soft() const;
    static Mask from_soft(const Eigen::MatrixXd& soft, double threshold = 0.5);

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<std::uint8_t> data_;
};

namespace io {

/// Read a PNG/BMP raster as grayscale intensities in [0,1].
Eigen::MatrixXd read_gray(const std::filesystem::path& path);
/// Read a PNG/BMP raster; grayscale files yield one channel, colour files three (RGB order).
Image read_image(const std::filesystem::path& path);
/// Decode an in-memory raster (e.g. an HTTP upload). Throws ParseError when undecodable.
Image decode_image(const std::string& bytes);
/// Read a label raster. Binary labels map any value > 127 to 1; when `keep_values` the raw
/// 8-bit values are kept (class masks such as artery/vein {0,1,2}).
Mask read_mask(const std::filesystem::path& path, bool keep_values = false);
/// Binary masks are written as 0/255; with `raw_values` the stored values are written as-is.
void write_mask(const std::filesystem::path& path, const Mask& mask, bool raw_values = false);
void write_image(const std::filesystem::path& path, const Image& image);
std::string encode_png(const Mask& mask);

}  // namespace io

}  // namespace octasam
