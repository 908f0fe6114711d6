#include "mesokappa/rng.hpp"

#include <stdexcept>

namespace mesokappa {

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x6b617070u};
  engine_.seed(seq);
}

double RngStream::uniform() {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x;
  do {
    x = u(engine_);
  } while (x == 0.0);
  return x;
}

double RngStream::exponential(double rate) {
  if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be positive");
  std::exponential_distribution<double> e(rate);
  return e(engine_);
}

double RngStream::gamma(double shape, double scale) {
  std::gamma_distribution<double> g(shape, scale);
  return g(engine_);
}

double sample_gamma(double shape, double scale, RngStream& rng) {
  if (!(shape > 0.0) || !(scale > 0.0))
    throw std::invalid_argument("sample_gamma: shape and scale must be positive");
  double x;
  do {
    x = rng.gamma(shape, scale);
  } while (!(x > 0.0));
  return x;
}

}  // namespace mesokappa
