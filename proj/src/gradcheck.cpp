#include "dipro/gradcheck.hpp"

#include <cmath>

#include "dipro/errors.hpp"

namespace dipro {

double grad_check(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params,
                  double step) {
    if (step <= 0.0) throw ContractError("grad_check: step must be positive");

    for (auto p : params) p.zero_grad();
    Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    backward(loss);

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
    }

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        auto vals = p.values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + step;
            const double up = loss_fn().item();
            vals[i] = saved - step;
            const double down = loss_fn().item();
            vals[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("grad_check: non-finite loss during perturbation");
            }
            const double numeric = (up - down) / (2.0 * step);
            const double rel = std::abs(analytic[pi][i] - numeric) / std::max(1.0, std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace dipro
