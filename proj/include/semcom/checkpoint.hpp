#pragma once

#include <map>
#include <string>
#include <vector>

#include "semcom/optim.hpp"
#include "semcom/tensor.hpp"

namespace semcom {

// Parameter checkpoint file, little-endian throughout:
//   magic "SEMC", version u16, count u32, then per parameter:
//   name length u16, UTF-8 name, rank u8, extents u32 each, f32 payload.
// Save -> load roundtrips are bit-exact.

inline constexpr uint16_t kCheckpointVersion = 1;

void save_checkpoint(const std::vector<const Parameter*>& params,
                     const std::string& path);
void save_checkpoint(const std::vector<Parameter*>& params,
                     const std::string& path);

// Reads every entry; throws ParseError on malformed input.
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

// Strict restore: every parameter must be present with a matching shape,
// and the file must not contain unknown names.
void load_checkpoint_into(const std::string& path,
                          const std::vector<Parameter*>& params);

}  // namespace semcom
