#include "core/rng.h"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace simit {

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw std::invalid_argument("Rng::uniform_int: hi < lo");
  std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  return lo + static_cast<int>(gen_() % range);
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * M_PI * u2;
  cached_ = r * std::sin(a);
  has_cached_ = true;
  return r * std::cos(a);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << gen_ << " " << (has_cached_ ? 1 : 0) << " ";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%a", cached_);
  os << buf;
  return os.str();
}

Rng Rng::deserialize(const std::string& s) {
  Rng r(0);
  std::istringstream is(s);
  is >> r.gen_;
  int flag = 0;
  std::string hex;
  is >> flag >> hex;
  if (is.fail()) throw std::runtime_error("Rng::deserialize: malformed state");
  r.has_cached_ = flag != 0;
  r.cached_ = std::strtod(hex.c_str(), nullptr);
  return r;
}

Rng Rng::substream(std::uint64_t root_seed, std::uint64_t stream) {
  return Rng(mix_seed(root_seed, stream));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace simit
