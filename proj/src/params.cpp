#include "tis/params.hpp"

#include <fstream>

#include "tis/binary_io.hpp"
#include "tis/error.hpp"

namespace tis {

namespace {
constexpr std::string_view kCheckpointMagic = "TISCKPT1";
}

Parameter& ParamStore::add(const std::string& name, Tensor value) {
  if (name.empty()) throw ContractError("parameter name must be nonempty");
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  Tensor grad(value.shape());
  auto [it, _] = params_.emplace(name, Parameter{name, std::move(value), std::move(grad)});
  return it->second;
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw NotFoundError("no parameter named " + name);
  return it->second;
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw NotFoundError("no parameter named " + name);
  return it->second;
}

std::size_t ParamStore::total_values() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) std::fill(p.grad.storage().begin(), p.grad.storage().end(), 0.0);
}

void ParamStore::merge(const ParamStore& other, const std::string& prefix) {
  for (const auto& [name, p] : other.params_)
    if (name.starts_with(prefix)) add(name, p.value);
}

ParamStore ParamStore::subset(const std::string& prefix) const {
  ParamStore out;
  out.merge(*this, prefix);
  return out;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b)
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  return true;
}

void write_checkpoint(std::ostream& os, const ParamStore& store) {
  binio::write_magic(os, kCheckpointMagic);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) {
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    binio::write_bytes(os, name.data(), name.size());
    const auto& shape = p.value.shape();
    binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
    for (auto e : shape) binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
    binio::write_bytes(os, p.value.data().data(), p.value.numel() * sizeof(double));
  }
}

ParamStore read_checkpoint(std::istream& is) {
  binio::expect_magic(is, kCheckpointMagic);
  const auto count = binio::read_le<std::uint32_t>(is, "parameter count");
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = binio::read_le<std::uint32_t>(is, "name length");
    if (len > 4096) throw FormatError("implausible parameter name length");
    std::string name(len, '\0');
    binio::read_bytes(is, name.data(), len, "parameter name");
    const auto rank = binio::read_le<std::uint32_t>(is, "rank");
    if (rank == 0 || rank > 8) throw FormatError("implausible rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = binio::read_le<std::uint32_t>(is, "extent");
    const std::size_t n = shape_numel(shape);
    if (n == 0 || n > (std::size_t{1} << 32)) throw FormatError("implausible extents for " + name);
    std::vector<double> data(n);
    binio::read_bytes(is, data.data(), n * sizeof(double), "parameter values");
    store.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, store);
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("missing checkpoint: " + path.string());
  return read_checkpoint(is);
}

}  // namespace tis
