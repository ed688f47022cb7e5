#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sll/model.hpp"

namespace sll::checkpoint {

// Self-describing binary container: magic, version, a JSON metadata blob and
// named float64 tensors, closed by an FNV-1a checksum of everything before
// it. Loading verifies magic, version and checksum.
struct TensorEntry {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Container {
  nlohmann::json meta;
  std::vector<TensorEntry> tensors;

  const TensorEntry& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xCBF29CE484222325ULL);
uint64_t file_hash(const std::string& path);

// Backbone fixture: config + vocabulary + frozen tensors.
void save_backbone(const std::string& path, const Backbone& backbone, const Vocab& vocab);
std::pair<Backbone, Vocab> load_backbone(const std::string& path);

// Copies tensor values into an existing parameter set by name (shape-checked).
void load_named_values(const Container& c, const std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace sll::checkpoint
