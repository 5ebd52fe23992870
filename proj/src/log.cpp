#include "rre/log.hpp"

#include <cstdlib>
#include <cstring>

namespace rre::logging {

Level level() {
    static Level cached = [] {
        const char* env = std::getenv("RRE_LOG");
        if (!env) return Level::Error;
        if (std::strcmp(env, "debug") == 0) return Level::Debug;
        if (std::strcmp(env, "info") == 0) return Level::Info;
        return Level::Error;
    }();
    return cached;
}

void write(Level lvl, const std::string& msg) {
    if (static_cast<int>(lvl) > static_cast<int>(level())) return;
    const char* tag = lvl == Level::Error ? "error" : (lvl == Level::Info ? "info" : "debug");
    std::fprintf(stderr, "[rre:%s] %s\n", tag, msg.c_str());
}

}  // namespace rre::logging
