#include "mfd/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace mfd {

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                  double step) {
  if (step <= 0.0) throw ConfigError("grad_check: step must be positive");

  Tensor x = Tensor::from_data(x0.shape(),
                               std::vector<double>(x0.data().begin(), x0.data().end()),
                               /*requires_grad=*/true);
  Tensor loss = f(x);
  if (loss.numel() != 1) throw ContractError("grad_check: f must return a scalar");
  if (!std::isfinite(loss.item())) throw NumericError("grad_check: f(x0) is non-finite");
  backward(loss);
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  if (analytic.empty()) analytic.assign(static_cast<size_t>(x.numel()), 0.0);

  NoGradGuard no_grad;
  std::vector<double> probe(x0.data().begin(), x0.data().end());
  double max_rel = 0.0;
  for (size_t i = 0; i < probe.size(); ++i) {
    const double keep = probe[i];
    probe[i] = keep + step;
    const double up = f(Tensor::from_data(x0.shape(), probe)).item();
    probe[i] = keep - step;
    const double down = f(Tensor::from_data(x0.shape(), probe)).item();
    probe[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace mfd
