#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tdl {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names the op and the shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An observation of the wrong modality was fed to a model.
class ModalityError : public Error {
 public:
  using Error::Error;
};

/// Malformed file, bad magic/version, or checksum mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value. Carries the offending line and field.
class ConfigError : public Error {
 public:
  ConfigError(int line, std::string field, const std::string& what);
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  int line_;
  std::string field_;
};

/// A pipeline stage failed its sanity bounds.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// splitmix64 finalizer; used to derive independent sub-seeds.
constexpr uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic seed derivation from a parent seed and a stream of keys.
constexpr uint64_t derive_seed(uint64_t seed, uint64_t key) { return mix64(seed ^ mix64(key + 0x632be59bd9b4e019ULL)); }
template <typename... Keys>
constexpr uint64_t derive_seed(uint64_t seed, uint64_t key, Keys... rest) {
  return derive_seed(derive_seed(seed, key), static_cast<uint64_t>(rest)...);
}

/// xoshiro256** generator with platform-independent distributions, so that
/// datasets and initializations are bit-identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n);
  double normal();

 private:
  uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// 64-bit FNV-1a over raw bytes.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes);
  void update(const void* p, std::size_t n);
  uint64_t digest() const { return h_; }

 private:
  uint64_t h_ = 0xcbf29ce484222325ULL;
};

uint64_t fnv1a(std::span<const double> values);
std::string hex64(uint64_t v);

}  // namespace tdl
