#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "tis/tensor.hpp"

namespace tis {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value
};

/// Named trainable parameters. Iteration order is lexicographic by name, which
/// is also the order records appear in a checkpoint file.
class ParamStore {
 public:
  /// Adds a parameter; throws ContractError if the name is taken.
  Parameter& add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_values() const;

  void zero_grad();

  /// Copies every parameter whose name begins with `prefix` into this store.
  void merge(const ParamStore& other, const std::string& prefix = "");
  /// Subset of parameters whose names start with `prefix`.
  ParamStore subset(const std::string& prefix) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Values-only equality (grads ignored).
  bool same_values(const ParamStore& other) const;

 private:
  std::map<std::string, Parameter> params_;
};

// Checkpoint: "TISCKPT1", u32 count, then per parameter: u32 name length,
// UTF-8 name, u32 rank, rank x u32 extents, f64 values. All little-endian.
void write_checkpoint(std::ostream& os, const ParamStore& store);
ParamStore read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);
ParamStore load_checkpoint(const std::filesystem::path& path);

}  // namespace tis
