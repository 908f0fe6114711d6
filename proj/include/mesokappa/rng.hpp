#pragma once

#include <cstdint>
#include <random>

namespace mesokappa {

// A reproducible random stream. The pair (seed, stream_id) fully determines
// the draw sequence; distinct stream ids give independent streams. Not safe
// to share between threads: give every consumer its own stream.
class RngStream {
 public:
  using engine_type = std::mt19937_64;

  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Uniform on the open interval (0,1).
  double uniform();
  double exponential(double rate);
  double gamma(double shape, double scale);

  engine_type& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  engine_type engine_;
};

double sample_gamma(double shape, double scale, RngStream& rng);

}  // namespace mesokappa
