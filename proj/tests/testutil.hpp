#ifndef DREAMPAST_TESTUTIL_HPP
#define DREAMPAST_TESTUTIL_HPP

#include <atomic>
#include <functional>
#include <string>

#include "doctest.h"
#include "util/common.hpp"
#include "util/rng.hpp"

namespace dptest {

namespace fs = dreampast::fs;

// self-cleaning unique directory under the system temp root
class TmpDir {
  public:
    explicit TmpDir(const std::string& tag = "dp") {
        static std::atomic<uint64_t> counter{0};
        path_ = fs::temp_directory_path() /
                ("dreampast_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TmpDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TmpDir(const TmpDir&) = delete;
    TmpDir& operator=(const TmpDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

  private:
    fs::path path_;
};

// Central-difference gradient check for one parameter buffer. `loss` must
// recompute forward+loss from current weights; `grad` holds the analytic
// gradient captured beforehand. Checks `samples` entries spread evenly
// over the buffer. Relative tolerance with an absolute floor, since tiny
// gradients drown in FD truncation error.
inline void check_grad_buffer(double* w, const double* grad, size_t n,
                              const std::function<double()>& loss, int samples = 5,
                              double eps = 1e-5, double rtol = 1e-4, double atol = 1e-7) {
    if (n == 0) return;
    size_t stride = n <= size_t(samples) ? 1 : n / size_t(samples);
    for (size_t i = 0; i < n; i += stride) {
        double keep = w[i];
        w[i] = keep + eps;
        double lp = loss();
        w[i] = keep - eps;
        double lm = loss();
        w[i] = keep;
        double fd = (lp - lm) / (2.0 * eps);
        double diff = std::abs(fd - grad[i]);
        double scale = std::max({std::abs(fd), std::abs(grad[i]), 1.0});
        INFO("entry ", i, " of ", n, ": fd=", fd, " analytic=", grad[i]);
        CHECK(diff <= atol + rtol * scale);
    }
}

}  // namespace dptest

#endif
