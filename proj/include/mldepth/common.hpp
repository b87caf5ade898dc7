#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mldepth {

// Thrown by binary readers/writers; `offset` is the byte position of the
// first invalid datum.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Scale-invariant normalization of an all-constant depth map has no scale.
class DegenerateScaleError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// decompose_step cannot rescale when the remapped component has ~zero norm.
class RescaleDegenerateError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Least-squares alignment with fewer than two points or constant predictions.
class AlignmentError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// splitmix64; used to derive independent per-pixel / per-run seeds so results
// do not depend on thread count or evaluation order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Chunked parallel loop. fn(begin, end) must only write state owned by its
// index range; chunk boundaries are fixed, so results match the serial run.
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  const std::size_t chunk = (n + nt - 1) / nt;
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const std::size_t b = t * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace mldepth
