#pragma once

#include <stdexcept>
#include <string>

namespace m3fc {

// Caller handed us something structurally unusable (bad sizes, bad values,
// unknown keys). Maps to exit code 2 at the CLI boundary.
struct InvalidArgument : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Everything that goes wrong at run time (I/O, non-finite numbers, caps).
// Maps to exit code 1 at the CLI boundary.
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyPointSet : InvalidArgument {
  EmptyPointSet() : InvalidArgument("point set is empty") {}
};

struct PointOutOfDomain : InvalidArgument {
  explicit PointOutOfDomain(const std::string& what) : InvalidArgument(what) {}
};

struct SupportMismatch : InvalidArgument {
  explicit SupportMismatch(const std::string& what) : InvalidArgument(what) {}
};

struct LengthMismatch : InvalidArgument {
  explicit LengthMismatch(const std::string& what) : InvalidArgument(what) {}
};

struct SizeMismatch : InvalidArgument {
  explicit SizeMismatch(const std::string& what) : InvalidArgument(what) {}
};

struct MeshTooLarge : InvalidArgument {
  explicit MeshTooLarge(const std::string& what) : InvalidArgument(what) {}
};

struct RowNotNormalized : InvalidArgument {
  explicit RowNotNormalized(const std::string& what) : InvalidArgument(what) {}
};

struct NonFiniteLoss : RuntimeFailure {
  explicit NonFiniteLoss(const std::string& what) : RuntimeFailure(what) {}
};

struct ConfigError : InvalidArgument {
  explicit ConfigError(const std::string& what) : InvalidArgument(what) {}
};

struct CheckpointEnvMismatch : InvalidArgument {
  explicit CheckpointEnvMismatch(const std::string& what)
      : InvalidArgument(what) {}
};

struct CheckpointMissing : RuntimeFailure {
  explicit CheckpointMissing(const std::string& what) : RuntimeFailure(what) {}
};

struct NonFiniteGap : RuntimeFailure {
  explicit NonFiniteGap(const std::string& what) : RuntimeFailure(what) {}
};

struct ZeroGradientNorm : RuntimeFailure {
  explicit ZeroGradientNorm(const std::string& what) : RuntimeFailure(what) {}
};

}  // namespace m3fc
