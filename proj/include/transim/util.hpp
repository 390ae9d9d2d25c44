#pragma once
// Shared constants, grids, deterministic seeding, and a small thread pool.
// Unit conventions used throughout the library:
//   - energies and frequencies are linear frequencies in GHz,
//   - times are in ns,
//   - factors of 2*pi appear only where a generator or phase is formed.

#include <cstdint>
#include <functional>
#include <vector>

namespace transim {

inline constexpr double pi = 3.14159265358979323846264338328;
inline constexpr double two_pi = 6.28318530717958647692528676656;

// Boltzmann constant over Planck constant, GHz per kelvin.
inline constexpr double kb_over_h_ghz_per_kelvin = 20.836619123;

// Bath temperature conversion: millikelvin -> linear GHz.
inline double millikelvin_to_ghz(double mk) {
  return kb_over_h_ghz_per_kelvin * mk * 1e-3;
}

// ---- grids ----

std::vector<double> linspace(double a, double b, int n);
std::vector<double> logspace(double a, double b, int n);  // endpoints a, b > 0

// ---- deterministic seeding ----

// Finalizer with good avalanche behaviour; used to derive independent
// per-stream seeds from (base_seed, stream_index).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ splitmix64(stream + 0x632be59bd9b4e019ull));
}

// ---- parallel loop ----

// Runs body(i) for i in [0, n). Each index writes only its own results, so
// the outcome is independent of the worker count. workers <= 0 uses the
// hardware concurrency; workers == 1 runs inline.
void parallel_for(int n, const std::function<void(int)>& body, int workers = 0);

int default_worker_count();

}  // namespace transim
