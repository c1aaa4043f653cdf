#pragma once

#include <stdexcept>
#include <string>

namespace rfcn {

// Shape/extent disagreement between tensors or layer geometry.
class DimensionError : public std::runtime_error {
public:
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument values (empty sequences, bad policies, out-of-range knobs).
class ArgumentError : public std::runtime_error {
public:
    explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

// File and stream failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or mismatched persisted state (checkpoints, datasets).
class LoadError : public std::runtime_error {
public:
    explicit LoadError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace rfcn
