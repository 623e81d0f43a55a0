#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pfkit {

inline constexpr const char* kVersion = "0.1.0";

using Complex = std::complex<double>;

// Thrown when an input model or file fails structural validation.
// `path` locates the offending element (e.g. "lines[3].r").
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Thrown when dataset generation cannot produce the requested points
// (e.g. too many diverged power-flow scenarios).
class DatasetError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a training run produces non-finite parameters or loss.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string param_path, const std::string& what)
      : std::runtime_error(what), param_path_(std::move(param_path)) {}
  const std::string& param_path() const { return param_path_; }

 private:
  std::string param_path_;
};

// SplitMix64 scrambler; used to derive independent stream seeds from a
// base seed without correlations between consecutive indices.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d4a2c46d3c7971ULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. All draws are built from raw mt19937_64
// output with fixed arithmetic (no std::distributions, whose output is
// implementation-defined), so results are identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller (fresh pair each call, cached spare).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // Uniform integer in [0, n). Rejection-free modulo is fine here: n is
  // tiny relative to 2^64, bias is far below anything observable.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  // +1.0 or -1.0 with equal probability.
  double sign() { return (engine_() & 1ULL) ? 1.0 : -1.0; }

  // Fisher-Yates shuffle with our own index draws.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a 64-bit hash, used for content fingerprints in manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

std::string hex64(std::uint64_t value);

// FNV-1a hash of a file's bytes, rendered as 16 hex digits.
// Throws ValidationError if the file cannot be read.
std::string hash_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace pfkit
