#pragma once

#include <cmath>
#include <cstdint>

namespace gfp {

// Counter-based random stream.  Every draw is a pure function of
// (master_seed, replicate, stream, counter), so replicate results do not
// depend on worker count or evaluation order, and noise arrays can be filled
// by absolute node index.

inline constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline uint64_t mix64(uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline uint64_t derive_seed(uint64_t master, uint64_t replicate, uint64_t stream) {
  uint64_t k = mix64(master + kGolden);
  k = mix64(k ^ (replicate + 0xD1B54A32D192ED03ull));
  k = mix64(k ^ (stream + 0x8CB92BA72F3D8DD7ull));
  return k;
}

class CounterRng {
 public:
  explicit CounterRng(uint64_t key) : key_(key) {}
  CounterRng(uint64_t master, uint64_t replicate, uint64_t stream)
      : key_(derive_seed(master, replicate, stream)) {}

  uint64_t key() const { return key_; }

  uint64_t word_at(uint64_t i) const { return mix64(key_ + (i + 1) * kGolden); }

  // uniform in (0,1]; never 0, so log() below is safe
  double unit_at(uint64_t i) const {
    return ((word_at(i) >> 11) + 1) * 0x1.0p-53;
  }

  // Box-Muller from words w, w+1
  double normal_from(uint64_t w) const {
    const double u1 = unit_at(w);
    const double u2 = unit_at(w + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  // i-th normal of the stream (array fills index by node)
  double normal_at(uint64_t i) const { return normal_from(2 * i); }

  // sequential convenience interface; a normal consumes two words
  uint64_t next_u64() { return word_at(ctr_++); }
  double next_unit() { return unit_at(ctr_++); }
  double next_normal() {
    const double z = normal_from(ctr_);
    ctr_ += 2;
    return z;
  }
  double next_uniform(double a, double b) { return a + (b - a) * next_unit(); }

 private:
  uint64_t key_;
  uint64_t ctr_ = 0;
};

}  // namespace gfp
