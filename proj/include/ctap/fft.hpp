#pragma once

// RAII wrapper around an in-place FFTW 3D complex transform. Plans use
// FFTW_ESTIMATE so the chosen algorithm, and hence every output bit, depends
// only on (shape, thread count).

#include <fftw3.h>

#include <array>
#include <complex>
#include <cstddef>
#include <mutex>

#include "ctap/errors.hpp"
#include "ctap/qgrid.hpp"

namespace ctap {

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
inline void fftw_threads_init() {
  static std::once_flag flag;
  std::call_once(flag, [] { fftw_init_threads(); });
}
}  // namespace detail

class Fft3d {
 public:
  Fft3d(std::array<std::size_t, 3> n, unsigned threads) : n_(n) {
    detail::fftw_threads_init();
    ComplexField probe(n[0] * n[1] * n[2]);
    auto* buf = reinterpret_cast<fftw_complex*>(probe.data());
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_plan_with_nthreads(static_cast<int>(threads == 0 ? 1 : threads));
    const int dims[3] = {static_cast<int>(n[0]), static_cast<int>(n[1]), static_cast<int>(n[2])};
    forward_ = fftw_plan_dft(3, dims, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft(3, dims, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!forward_ || !backward_) throw Error("FFTW planning failed");
  }

  Fft3d(const Fft3d&) = delete;
  Fft3d& operator=(const Fft3d&) = delete;

  ~Fft3d() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    if (forward_) fftw_destroy_plan(forward_);
    if (backward_) fftw_destroy_plan(backward_);
  }

  const std::array<std::size_t, 3>& shape() const { return n_; }

  // Unnormalized in both directions.
  void forward(ComplexField& data) const { execute(forward_, data); }
  void backward(ComplexField& data) const { execute(backward_, data); }

 private:
  void execute(fftw_plan p, ComplexField& data) const {
    if (data.size() != n_[0] * n_[1] * n_[2]) throw GridMismatch("FFT buffer size mismatch");
    auto* buf = reinterpret_cast<fftw_complex*>(data.data());
    fftw_execute_dft(p, buf, buf);
  }

  std::array<std::size_t, 3> n_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

}  // namespace ctap
