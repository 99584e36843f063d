// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cigan {

// Deterministic random stream. mt19937_64 is fully specified by the standard,
// and the gaussian is an explicit Box-Muller, so a given seed produces the
// same draw sequence on every platform (std::normal_distribution would not).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() {
    return (gen_() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
  }

  // uniform integer in [0, n), rejection-sampled so there is no modulo bias
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // standard normal via Box-Muller, second draw cached
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  std::string save_state() const {
    std::ostringstream os;
    os << gen_ << " " << (has_cached_ ? 1 : 0) << " " << cached_;
    return os.str();
  }

  void load_state(const std::string& s) {
    std::istringstream is(s);
    int hc = 0;
    is >> gen_ >> hc >> cached_;
    if (is.fail()) throw std::runtime_error("Rng::load_state: malformed state string");
    has_cached_ = hc != 0;
  }

 private:
  std::mt19937_64 gen_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace cigan
