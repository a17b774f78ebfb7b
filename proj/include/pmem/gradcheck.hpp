#pragma once

#include <functional>
#include <vector>

#include "pmem/tape.hpp"

namespace pmem {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference check of reverse-mode gradients. loss_fn must rebuild
// the forward pass from the current parameter values on every call. The
// relative error uses |a - b| / max(|a| + |b|, floor); the floor keeps
// finite-difference noise on near-zero gradients from dominating.
GradCheckResult grad_check(const std::function<double()>& loss_fn,
                           const std::vector<Parameter*>& params, double eps = 1e-5,
                           double denom_floor = 1e-3);

}  // namespace pmem
