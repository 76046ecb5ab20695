#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

#ifndef MMP_VERSION
#define MMP_VERSION "0.1.0"
#endif

namespace mmp {

/// Malformed input data: unparsable cells, wrong dimensions, label problems.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical routine could not proceed (non-SPD matrix, non-finite input).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An internal invariant was violated (only raised when debug checks are on).
class InvariantError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline constexpr std::string_view version() { return MMP_VERSION; }

using WarningSink = std::function<void(std::string_view)>;

/// Process-wide sink for non-fatal warnings. Defaults to std::clog.
inline WarningSink& warning_sink() {
  static WarningSink sink = [](std::string_view msg) {
    std::clog << "mmp: warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(std::string_view msg) {
  if (warning_sink()) warning_sink()(msg);
}

/// 64-bit FNV-1a. Used for config fingerprints recorded in output files.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mmp
