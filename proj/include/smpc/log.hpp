#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace smpc::log {

enum class Level : int { quiet = 0, info = 1, debug = 2 };

/// Verbosity from the SMPC_LOG environment variable
/// ("quiet"/"0", "info"/"1" (default), "debug"/"2").
inline Level level() {
  static const Level lvl = [] {
    const char* env = std::getenv("SMPC_LOG");
    if (env == nullptr) return Level::info;
    if (std::strcmp(env, "0") == 0 || std::strcmp(env, "quiet") == 0) return Level::quiet;
    if (std::strcmp(env, "2") == 0 || std::strcmp(env, "debug") == 0) return Level::debug;
    return Level::info;
  }();
  return lvl;
}

template <typename... Args>
void info(const char* fmt, Args... args) {
  if (level() >= Level::info) {
    std::fprintf(stderr, "[smpc] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

template <typename... Args>
void debug(const char* fmt, Args... args) {
  if (level() >= Level::debug) {
    std::fprintf(stderr, "[smpc:debug] ");
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
  }
}

}  // namespace smpc::log
