#include "pmem/gradcheck.hpp"

#include <cmath>

namespace pmem {

GradCheckResult grad_check(const std::function<double()>& loss_fn,
                           const std::vector<Parameter*>& params, double eps,
                           double denom_floor) {
    if (eps <= 0.0) fail("gradcheck", "eps must be positive, got ", eps);

    // loss_fn is expected to run backward itself; capture analytic gradients
    // from a single clean evaluation.
    for (Parameter* p : params) p->zero_grad();
    double base = loss_fn();
    if (!std::isfinite(base)) fail("gradcheck", "loss is not finite: ", base);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        for (int64_t i = 0; i < p.numel(); ++i) {
            double orig = p.value.at(i);
            p.value.at(i) = orig + eps;
            double lp = loss_fn();
            p.value.at(i) = orig - eps;
            double lm = loss_fn();
            p.value.at(i) = orig;
            double numeric = (lp - lm) / (2.0 * eps);
            double a = analytic[pi].at(i);
            double err = std::fabs(a - numeric) /
                         std::max(std::fabs(a) + std::fabs(numeric), denom_floor);
            if (err > res.max_rel_err) {
                res.max_rel_err = err;
                res.worst_param = p.name;
                res.worst_index = i;
                res.analytic = a;
                res.numeric = numeric;
            }
        }
    }
    return res;
}

}  // namespace pmem
