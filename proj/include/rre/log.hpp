#pragma once

#include <cstdio>
#include <string>

namespace rre::logging {

enum class Level { Error = 0, Info = 1, Debug = 2 };

// Level comes from the RRE_LOG environment variable: error | info | debug.
Level level();

void write(Level lvl, const std::string& msg);

inline void error(const std::string& msg) { write(Level::Error, msg); }
inline void info(const std::string& msg) { write(Level::Info, msg); }
inline void debug(const std::string& msg) { write(Level::Debug, msg); }

}  // namespace rre::logging
