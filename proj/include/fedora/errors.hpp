#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fedora {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FEDORA_DECLARE_ERROR(Name)    \
  class Name : public Error {         \
   public:                            \
    using Error::Error;               \
  };

FEDORA_DECLARE_ERROR(EmptyGroup)
FEDORA_DECLARE_ERROR(DegenerateGroup)
FEDORA_DECLARE_ERROR(EmptySources)
FEDORA_DECLARE_ERROR(TooSmall)
FEDORA_DECLARE_ERROR(FormatError)
FEDORA_DECLARE_ERROR(ValueError)
FEDORA_DECLARE_ERROR(DimensionMismatch)
FEDORA_DECLARE_ERROR(LengthMismatch)
FEDORA_DECLARE_ERROR(InvalidSpec)
FEDORA_DECLARE_ERROR(CheckpointError)
FEDORA_DECLARE_ERROR(ConfigError)
FEDORA_DECLARE_ERROR(MissingInput)
FEDORA_DECLARE_ERROR(IoError)

#undef FEDORA_DECLARE_ERROR

/// A training loss became NaN or infinite.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& what, std::size_t iteration)
      : Error(what + " at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace fedora
