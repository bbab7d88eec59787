#include "hstf/common/logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <string>

namespace hstf {

void init_logging() {
  auto logger = spdlog::stderr_color_mt("hstf");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("HSTF_LOG");
  auto level = spdlog::level::warn;
  if (env != nullptr && *env != '\0') level = spdlog::level::from_str(env);
  spdlog::set_level(level);
}

}  // namespace hstf
