#pragma once

#include <map>
#include <string>

#include "cogdiag/optimizer.hpp"

namespace cogdiag {

// Serialized model state: parameters plus any string metadata (model
// kind, alignment mode, seed). Format is versioned JSON; loading an
// unknown version fails rather than guessing.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParameterStore params;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace cogdiag
