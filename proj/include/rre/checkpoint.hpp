#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rre/param_store.hpp"

namespace rre {

// Binary checkpoint container. Layout (all integers little-endian):
//   magic "RREC" | version u8 | section count u32
//   per section: name | step i64 | param count u32
//   per param:   name | rank u32 | extents u32... | value f64[] | m f64[] | v f64[]
// Strings are u32 length + bytes. Floats are raw IEEE-754 little-endian.
inline constexpr unsigned char kCheckpointVersion = 1;

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const ParamStore*>>& sections);

// Throws CheckpointError on bad magic, unsupported version or truncation.
std::map<std::string, ParamStore> load_checkpoint(const std::string& path);

}  // namespace rre
