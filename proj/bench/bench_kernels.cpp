// Times the serial reference kernels against the OpenMP ones and reports
// whether their outputs agree bitwise.
//
//   unisoma_bench [--size N] [--repeats R] [--threads T]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "unisoma/kernels.hpp"

namespace k = unisoma::kernels;

namespace {

template <class F>
double best_of(int repeats, F&& f) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

void report(const char* name, double serial, double parallel, const std::vector<double>& a,
            const std::vector<double>& b) {
  const bool same = std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
  std::printf("%-16s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  %s\n", name, serial * 1e3,
              parallel * 1e3, serial / parallel, same ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  std::size_t n = 256;
  int repeats = 5;
  int threads = 0;
  app.add_option("--size", n, "matrix side / row count");
  app.add_option("--repeats", repeats, "timing repeats (best is reported)");
  app.add_option("--threads", threads, "OpenMP threads (0 keeps the default)");
  CLI11_PARSE(app, argc, argv);
  if (threads > 0) k::set_threads(threads);
  std::printf("threads: %d, size: %zu\n", k::max_threads(), n);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a(n * n), b(n * n);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  std::vector<double> ys(n * n), yp(n * n), rs(n), rp(n);

  for (auto [ta, tb, label] : {std::tuple{k::Trans::no, k::Trans::no, "gemm nn"},
                               std::tuple{k::Trans::yes, k::Trans::no, "gemm tn"},
                               std::tuple{k::Trans::no, k::Trans::yes, "gemm nt"}}) {
    const double s = best_of(repeats, [&] { k::serial::gemm(ta, tb, n, n, n, a.data(), b.data(), ys.data(), false); });
    const double p = best_of(repeats, [&] { k::parallel::gemm(ta, tb, n, n, n, a.data(), b.data(), yp.data(), false); });
    report(label, s, p, ys, yp);
  }
  {
    const double s = best_of(repeats, [&] { k::serial::softmax(a.data(), ys.data(), n, n, 1); });
    const double p = best_of(repeats, [&] { k::parallel::softmax(a.data(), yp.data(), n, n, 1); });
    report("softmax", s, p, ys, yp);
  }
  {
    const double s = best_of(repeats, [&] { k::serial::normalize_rows(a.data(), ys.data(), rs.data(), n, n, 1e-5); });
    const double p = best_of(repeats, [&] { k::parallel::normalize_rows(a.data(), yp.data(), rp.data(), n, n, 1e-5); });
    report("normalize_rows", s, p, ys, yp);
  }
  {
    const double s = best_of(repeats, [&] { k::serial::gelu(a.data(), ys.data(), n * n); });
    const double p = best_of(repeats, [&] { k::parallel::gelu(a.data(), yp.data(), n * n); });
    report("gelu", s, p, ys, yp);
  }
  return 0;
}
