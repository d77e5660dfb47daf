#pragma once

#include <spdlog/spdlog.h>

namespace promptrec {

// stderr logger whose level comes from PROMPTREC_LOG (trace, debug, info,
// warn, error, off; default warn).
spdlog::logger& logger();

}  // namespace promptrec
