#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sagcn {

using Idx = std::int64_t;

/* A single user-item interaction, in dense index space. */
struct Edge {
  Idx user = 0;
  Idx item = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/* Row-major dense matrix of doubles. All model math runs in double;
   float32 is used only for checkpoint serialization. */
struct Mat {
  Idx rows = 0;
  Idx cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(Idx r, Idx c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

  double* row(Idx r) { return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }
  const double* row(Idx r) const { return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }

  double& at(Idx r, Idx c) { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  double at(Idx r, Idx c) const { return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

/* Deterministic RNG used everywhere artifacts must be reproducible across
   platforms. Standard-library distributions are implementation-defined, so
   sampling is hand-rolled on top of splitmix64. */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /* Uniform in [0, 1) with 53 bits of precision. */
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /* Uniform integer in [0, n), unbiased via rejection. */
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x < threshold);
    return x % n;
  }

  /* Standard normal via Box-Muller. */
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  /* Fisher-Yates. */
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/* Derives independent sub-streams (per user, per epoch, ...) from one seed. */
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

inline bool starts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

std::string sha256_hex(std::string_view data);
std::string sha256_file_hex(const std::filesystem::path& path);

/* Reads a whole file into memory; throws std::runtime_error if unreadable. */
std::string read_file(const std::filesystem::path& path);

/* Writes via a temp file in the same directory plus an atomic rename. */
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace sagcn
