#pragma once

#include <stdexcept>
#include <string>

namespace salad {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad or inconsistent run configuration (unknown backend id, missing root...).
struct ConfigError : Error {
  using Error::Error;
};

/// A caller violated an operation precondition.
struct ArgumentError : Error {
  using Error::Error;
};

/// Tensor/map shape disagreement.
struct ShapeError : Error {
  using Error::Error;
};

/// File could not be read, written or decoded.
struct IoError : Error {
  using Error::Error;
};

/// A real backend was requested but its weights/asset files are absent.
struct AssetUnavailable : Error {
  using Error::Error;
};

/// Training produced a non-finite loss or an empty corpus.
struct TrainingError : Error {
  using Error::Error;
};

/// A pipeline stage was run before the stage it depends on.
struct MissingArtifact : Error {
  using Error::Error;
};

}  // namespace salad
