#pragma once

// Little-endian binary helpers shared by the weight and adapter checkpoint formats.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/Core>

#include "octasam/errors.hpp"

namespace octasam::binio {

inline void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

inline void write_blob(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

/// Row-major float64.
inline void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
}

inline void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw ParseError(std::string("truncated file while reading ") + what);
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
    std::uint32_t v;
    read_exact(in, reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
}

inline std::uint64_t read_u64(std::istream& in, const char* what) {
    std::uint64_t v;
    read_exact(in, reinterpret_cast<char*>(&v), sizeof v, what);
    return v;
}

inline std::string read_blob(std::istream& in, const char* what, std::uint64_t limit = 64u << 20) {
    const auto n = read_u64(in, what);
    if (n > limit) throw ParseError(std::string("implausible length while reading ") + what);
    std::string s(n, '\0');
    read_exact(in, s.data(), n, what);
    return s;
}

inline Eigen::MatrixXd read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            double v;
            read_exact(in, reinterpret_cast<char*>(&v), sizeof v, what.c_str());
            m(r, c) = v;
        }
    return m;
}

inline void expect_magic(std::istream& in, const char (&magic)[9], const std::string& path) {
    char buf[8];
    in.read(buf, 8);
    if (in.gcount() != 8 || std::memcmp(buf, magic, 8) != 0) throw ParseError("not a recognised checkpoint: " + path);
}

}  // namespace octasam::binio
