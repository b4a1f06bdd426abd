#pragma once

#include <charconv>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <system_error>

namespace treefe {

class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised on malformed input files (CSV, model documents).
class LoadError : public Error {
  using Error::Error;
};

// Raised when a design matrix is numerically rank deficient.
class RankError : public Error {
  using Error::Error;
};

// Raised when a tree/unit-tree pair cannot be encoded on a dataset.
class EncodingError : public Error {
  using Error::Error;
};

// Raised when prediction is requested for a unit the model has not seen.
class PredictError : public Error {
  using Error::Error;
};

class ConfigError : public Error {
  using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives one RNG stream seed from a key tuple. Streams keyed this way are
// stable under reordering of work items, which keeps parallel runs
// reproducible.
inline std::uint64_t seed_stream(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ull;
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

// Shortest decimal string that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw LoadError("not a number: '" + s + "' at " + where);
  return v;
}

}  // namespace treefe
