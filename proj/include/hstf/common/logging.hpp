#pragma once

#include <spdlog/spdlog.h>

namespace hstf {

/// Configures the default spdlog logger to stderr with the level taken from
/// the HSTF_LOG environment variable (trace|debug|info|warn|error|off).
/// Defaults to warn so library users and tests stay quiet.
void init_logging();

}  // namespace hstf
