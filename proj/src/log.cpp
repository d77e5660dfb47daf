#include "promptrec/log.hpp"

#include <cstdlib>

#include <spdlog/sinks/stdout_sinks.h>

namespace promptrec {

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_logger_mt("promptrec");
    l->set_pattern("[%l] %v");
    const char* env = std::getenv("PROMPTREC_LOG");
    l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
    return l;
  }();
  return *instance;
}

}  // namespace promptrec
