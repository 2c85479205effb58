#include "octasam/log.hpp"

#include <iostream>
#include <mutex>

namespace octasam::log {
namespace {

std::mutex g_mutex;

void default_sink(Level level, std::string_view message) {
    if (level < Level::Warn) return;
    std::cerr << (level == Level::Warn ? "warning: " : "error: ") << message << '\n';
}

Sink& current() {
    static Sink sink = default_sink;
    return sink;
}

}  // namespace

Sink set_sink(Sink sink) {
    std::lock_guard lock(g_mutex);
    Sink previous = std::move(current());
    current() = sink ? std::move(sink) : Sink(default_sink);
    return previous;
}

void write(Level level, std::string_view message) {
    std::lock_guard lock(g_mutex);
    current()(level, message);
}

}  // namespace octasam::log
