#pragma once

#include <string>
#include <vector>

#include "madp/nn.hpp"

namespace madp::nd {

// Binary checkpoint: one length-prefixed record per entry (id string, shape,
// little-endian f64 payload). A plain-text manifest listing ids and shapes is
// written next to it as `<path>.manifest`.
void save_checkpoint(const std::string& path, const std::vector<StateEntry>& entries);

// Loads by id into the given entries. Every entry must be present in the file
// with a matching shape; extra records in the file are an error too, so a
// checkpoint always matches the architecture it is loaded into.
void load_checkpoint(const std::string& path, const std::vector<StateEntry>& entries);

} // namespace madp::nd
