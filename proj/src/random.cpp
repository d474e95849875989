#include "palpas/random.hpp"

#include <sys/random.h>

#include <cerrno>

#include "palpas/error.hpp"

namespace palpas {

void SystemRandom::fill(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    const ssize_t n = ::getrandom(out.data() + done, out.size() - done, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::randomness_unavailable, "getrandom failed");
    }
    done += static_cast<std::size_t>(n);
  }
}

RandomSource& system_random() {
  static SystemRandom rng;
  return rng;
}

}  // namespace palpas
