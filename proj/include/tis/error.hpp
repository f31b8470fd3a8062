#pragma once

#include <stdexcept>
#include <string>

namespace tis {

/// Base class for every error raised by the library. `kind()` is a stable
/// machine-readable tag used by the CLI and the HTTP service.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TIS_DEFINE_ERROR(Name, tag)                                      \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(tag, what) {}         \
  };

TIS_DEFINE_ERROR(ShapeError, "shape")
TIS_DEFINE_ERROR(IndexError, "index")
TIS_DEFINE_ERROR(ContractError, "contract")
TIS_DEFINE_ERROR(PositionError, "position")
TIS_DEFINE_ERROR(NumericError, "numeric")
TIS_DEFINE_ERROR(SpecError, "spec")
TIS_DEFINE_ERROR(IoError, "io")
TIS_DEFINE_ERROR(FormatError, "format")
TIS_DEFINE_ERROR(ConfigError, "config")
TIS_DEFINE_ERROR(ValidationError, "validation")
TIS_DEFINE_ERROR(ConflictError, "conflict")
TIS_DEFINE_ERROR(NotFoundError, "not_found")
TIS_DEFINE_ERROR(UnavailableError, "unavailable")

#undef TIS_DEFINE_ERROR

}  // namespace tis
