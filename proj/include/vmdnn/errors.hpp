#pragma once

#include <stdexcept>
#include <string>

namespace vmdnn {

/// Invalid configuration or mismatched shapes.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A non-finite internal state appeared during a rollout or gradient pass.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::string layer, int step)
        : std::runtime_error("non-finite value in layer " + layer + " at step " +
                             std::to_string(step)),
          layer_(std::move(layer)),
          step_(step) {}

    const std::string& layer() const { return layer_; }
    int step() const { return step_; }

private:
    std::string layer_;
    int step_;
};

/// Base class for checkpoint load failures.
class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

class CheckpointFormatError : public CheckpointError {
public:
    explicit CheckpointFormatError(const std::string& what) : CheckpointError(what) {}
};

class CheckpointVersionError : public CheckpointError {
public:
    explicit CheckpointVersionError(const std::string& what) : CheckpointError(what) {}
};

class CheckpointTruncationError : public CheckpointError {
public:
    explicit CheckpointTruncationError(const std::string& what) : CheckpointError(what) {}
};

class CheckpointChecksumError : public CheckpointError {
public:
    explicit CheckpointChecksumError(const std::string& what) : CheckpointError(what) {}
};

}  // namespace vmdnn
