#include "ectnet/error.hpp"

#include <iostream>
#include <mutex>

namespace ectnet {

namespace {
std::mutex sink_mutex;
WarningSink& sink() {
    static WarningSink s = [](const std::string& message) { std::cerr << "warning: " << message << '\n'; };
    return s;
}
}  // namespace

void set_warning_sink(WarningSink s) {
    std::lock_guard lock(sink_mutex);
    sink() = s ? std::move(s) : [](const std::string&) {};
}

void warn(const std::string& message) {
    std::lock_guard lock(sink_mutex);
    sink()(message);
}

}  // namespace ectnet
