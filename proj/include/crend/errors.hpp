#pragma once

#include <stdexcept>
#include <string>

namespace crend {

// Malformed .cvol / checkpoint / manifest header.
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Header parsed but payload does not match it.
struct CorruptionError : std::runtime_error {
  explicit CorruptionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Phantom generator could not place the requested follicle count.
struct PlacementError : std::runtime_error {
  PlacementError(const std::string& msg, int requested_, int achieved_)
      : std::runtime_error(msg), requested(requested_), achieved(achieved_) {}
  int requested = 0;
  int achieved = 0;
};

// Training step produced a non-finite loss component.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& msg, const std::string& component_)
      : std::runtime_error(msg), component(component_) {}
  std::string component;
};

}  // namespace crend
