#include "unisoma/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "unisoma/autograd.hpp"

namespace unisoma {

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double h, double tol) {
  GradCheckReport report;
  Tape tape;
  const Tensor xw = tape.watch(x);
  const Tensor y = f(xw);
  if (y.numel() != 1) throw DimensionError("grad_check: function is not scalar-valued");
  const Tensor analytic = y.tracked() ? tape.backward(y).of(xw) : Tensor::zeros(x.shape());

  std::vector<double> probe = x.to_vector();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    const double step = h * std::max(1.0, std::abs(orig));
    probe[i] = orig + step;
    const double fp = f(Tensor(x.shape(), probe)).item();
    probe[i] = orig - step;
    const double fm = f(Tensor(x.shape(), probe)).item();
    probe[i] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double ad = analytic[i];
    if (!std::isfinite(numeric) || !std::isfinite(ad)) {
      report.pass = false;
      report.worst_index = i;
      report.max_rel_err = std::numeric_limits<double>::infinity();
      report.message = "non-finite gradient at coordinate " + std::to_string(i);
      return report;
    }
    const double denom = std::max({std::abs(ad), std::abs(numeric), 1e-8});
    const double err = std::abs(ad - numeric) / denom;
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_err <= tol;
  report.message = "max relative error " + std::to_string(report.max_rel_err) + " at coordinate " +
                   std::to_string(report.worst_index);
  return report;
}

}  // namespace unisoma
