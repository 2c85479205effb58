#include "octasam/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "octasam/errors.hpp"

namespace octasam {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0) throw ShapeError("negative image dimensions");
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

Eigen::MatrixXd Image::channel(int c) const {
    Eigen::MatrixXd out(height_, width_);
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) out(y, x) = at(y, x, c);
    return out;
}

void Image::set_channel(int c, const Eigen::MatrixXd& values) {
    if (values.rows() != height_ || values.cols() != width_) throw ShapeError("channel shape mismatch");
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) at(y, x, c) = values(y, x);
}

bool Image::all_finite_in_unit_range() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; });
}

Mask::Mask(int height, int width, std::uint8_t fill) : height_(height), width_(width) {
    if (height < 0 || width < 0) throw ShapeError("negative mask dimensions");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
}

std::size_t Mask::count_nonzero() const {
    return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(), [](auto v) { return v != 0; }));
}

std::size_t Mask::count_value(std::uint8_t v) const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), v));
}

std::uint8_t Mask::max_value() const {
    return data_.empty() ? 0 : *std::max_element(data_.begin(), data_.end());
}

Mask Mask::select(std::uint8_t value) const {
    Mask out(height_, width_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data_[i] = data_[i] == value ? 1 : 0;
    return out;
}

Eigen::MatrixXd Mask::to_soft() const {
    Eigen::MatrixXd out(height_, width_);
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) out(y, x) = at(y, x) != 0 ? 1.0 : 0.0;
    return out;
}

Mask Mask::from_soft(const Eigen::MatrixXd& soft, double threshold) {
    Mask out(static_cast<int>(soft.rows()), static_cast<int>(soft.cols()));
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x) out.at(y, x) = soft(y, x) > threshold ? 1 : 0;
    return out;
}

namespace io {
namespace {

cv::Mat load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("no such file: " + path.string());
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw ParseError("cannot decode raster: " + path.string());
    return m;
}

Image from_mat(const cv::Mat& raw, const std::string& what) {
    cv::Mat m;
    if (raw.depth() == CV_16U) {
        raw.convertTo(m, CV_8U, 1.0 / 257.0);
    } else if (raw.depth() == CV_8U) {
        m = raw;
    } else {
        throw ParseError("unsupported raster depth: " + what);
    }
    const int ch = m.channels();
    if (ch == 1) {
        Image out(m.rows, m.cols, 1);
        for (int y = 0; y < m.rows; ++y)
            for (int x = 0; x < m.cols; ++x) out.at(y, x) = m.at<std::uint8_t>(y, x) / 255.0;
        return out;
    }
    if (ch == 3 || ch == 4) {
        Image out(m.rows, m.cols, 3);
        for (int y = 0; y < m.rows; ++y) {
            const auto* row = m.ptr<std::uint8_t>(y);
            for (int x = 0; x < m.cols; ++x) {
                // OpenCV stores BGR(A)
                out.at(y, x, 0) = row[x * ch + 2] / 255.0;
                out.at(y, x, 1) = row[x * ch + 1] / 255.0;
                out.at(y, x, 2) = row[x * ch + 0] / 255.0;
            }
        }
        return out;
    }
    throw ParseError("unsupported channel count in " + what);
}

}  // namespace

Image read_image(const std::filesystem::path& path) { return from_mat(load(path), path.string()); }

Image decode_image(const std::string& bytes) {
    if (bytes.empty()) throw ParseError("empty image upload");
    cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<char*>(bytes.data()));
    cv::Mat m;
    try {
        m = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
    } catch (const cv::Exception& e) {
        throw ParseError(std::string("cannot decode image upload: ") + e.what());
    }
    if (m.empty()) throw ParseError("cannot decode image upload");
    return from_mat(m, "upload");
}

Eigen::MatrixXd read_gray(const std::filesystem::path& path) {
    Image img = read_image(path);
    if (img.channels() == 1) return img.channel(0);
    // ITU-R BT.601 luma
    return 0.299 * img.channel(0) + 0.587 * img.channel(1) + 0.114 * img.channel(2);
}

Mask read_mask(const std::filesystem::path& path, bool keep_values) {
    cv::Mat m = load(path);
    if (m.depth() != CV_8U) throw ParseError("label raster must be 8-bit: " + path.string());
    Mask out(m.rows, m.cols);
    const int ch = m.channels();
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) {
            const std::uint8_t v = row[x * ch];
            out.at(y, x) = keep_values ? v : (v > 127 ? 1 : 0);
        }
    }
    return out;
}

void write_mask(const std::filesystem::path& path, const Mask& mask, bool raw_values) {
    cv::Mat m(mask.height(), mask.width(), CV_8U);
    const bool binary = !raw_values && mask.is_binary();
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            m.at<std::uint8_t>(y, x) = binary ? (mask.at(y, x) ? 255 : 0) : mask.at(y, x);
    if (!cv::imwrite(path.string(), m)) throw Error("cannot write " + path.string());
}

void write_image(const std::filesystem::path& path, const Image& image) {
    const int ch = image.channels();
    if (ch != 1 && ch != 3) throw ShapeError("write_image expects 1 or 3 channels");
    cv::Mat m(image.height(), image.width(), ch == 1 ? CV_8U : CV_8UC3);
    for (int y = 0; y < image.height(); ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width(); ++x)
            for (int c = 0; c < ch; ++c) {
                const int dst = ch == 3 ? 2 - c : c;
                row[x * ch + dst] = static_cast<std::uint8_t>(
                    std::lround(std::clamp(image.at(y, x, c), 0.0, 1.0) * 255.0));
            }
    }
    if (!cv::imwrite(path.string(), m)) throw Error("cannot write " + path.string());
}

std::string encode_png(const Mask& mask) {
    cv::Mat m(mask.height(), mask.width(), CV_8U);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) m.at<std::uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
    std::vector<std::uint8_t> buf;
    cv::imencode(".png", m, buf);
    return {buf.begin(), buf.end()};
}

}  // namespace io
}  // namespace octasam
