#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "octasam/log.hpp"
#include "octasam/rng.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        octasam::Rng rng(octasam::stable_hash(tag) ^ static_cast<std::uint64_t>(
                                                          std::filesystem::file_time_type::clock::now()
                                                              .time_since_epoch()
                                                              .count()));
        path_ = std::filesystem::temp_directory_path() / ("octasam-" + tag + "-" + std::to_string(rng.next_u64() % 1000000007));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Captures log messages for its lifetime.
class LogCapture {
public:
    LogCapture() {
        previous_ = octasam::log::set_sink([this](octasam::log::Level, std::string_view m) { lines.emplace_back(m); });
    }
    ~LogCapture() { octasam::log::set_sink(previous_); }
    LogCapture(const LogCapture&) = delete;
    LogCapture& operator=(const LogCapture&) = delete;

    bool contains(std::string_view needle) const {
        for (const auto& l : lines)
            if (l.find(needle) != std::string::npos) return true;
        return false;
    }

    std::vector<std::string> lines;

private:
    octasam::log::Sink previous_;
};

}  // namespace testing
