#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sgg {

// splitmix64: used to derive independent substream seeds from a master seed.
uint64_t splitmix64(uint64_t& state);
uint64_t derive_seed(uint64_t master, uint64_t stream_id);

// Deterministic RNG. All value transforms are implemented here rather than
// through std:: distributions, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n);
  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// FNV-1a 64-bit content hash (integrity check, not cryptographic).
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(const std::string& s);
uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(uint64_t h);

std::string base64_encode(const void* data, size_t len);
std::vector<uint8_t> base64_decode(const std::string& s);

// Little-endian f32 <-> byte packing for on-disk tensors.
std::vector<uint8_t> pack_f32_le(const std::vector<float>& v);
std::vector<float> unpack_f32_le(const std::vector<uint8_t>& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace sgg
