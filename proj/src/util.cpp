#include "transim/util.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace transim {

std::vector<double> linspace(double a, double b, int n) {
  if (n < 1) throw std::invalid_argument("linspace: need n >= 1");
  std::vector<double> v(n);
  if (n == 1) {
    v[0] = a;
    return v;
  }
  const double h = (b - a) / (n - 1);
  for (int i = 0; i < n; ++i) v[i] = a + h * i;
  v.back() = b;
  return v;
}

std::vector<double> logspace(double a, double b, int n) {
  if (a <= 0 || b <= 0) throw std::invalid_argument("logspace: endpoints must be positive");
  std::vector<double> v = linspace(std::log(a), std::log(b), n);
  for (double& x : v) x = std::exp(x);
  v.front() = a;
  v.back() = b;
  return v;
}

int default_worker_count() {
  if (const char* env = std::getenv("TRANSIM_WORKERS")) {
    const int w = std::atoi(env);
    if (w >= 1) return w;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc ? static_cast<int>(hc) : 1;
}

void parallel_for(int n, const std::function<void(int)>& body, int workers) {
  if (n <= 0) return;
  if (workers <= 0) workers = default_worker_count();
  if (workers > n) workers = n;
  if (workers == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          body(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace transim
