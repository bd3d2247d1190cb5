#pragma once

#include <string>
#include <utility>
#include <vector>

#include "selb/tensor.hpp"

namespace selb {

// Parameter file format (little-endian throughout):
//   magic "SELB" | u32 version (currently 1)
// followed by one record per tensor until end of file:
//   u32 name length | utf-8 name | u32 rank | u32 dims[rank] | f64 payload
struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, Tensor>>& entries);

std::vector<TensorRecord> load_tensors(const std::string& path);

// Atomic text write: writes to a temporary sibling then renames into place.
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace selb
