#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gady/optim.hpp"
#include "gady/tape.hpp"

namespace gady {

/// A scalar loss value with gradients aligned to a ParamStore's ordering.
struct LossEval {
    double value = 0.0;
    std::vector<Tensor> grads;
};

/// Build a loss on a fresh tape from the store's current values, run
/// backward, and collect per-parameter gradients.
inline LossEval eval_loss(const ParamStore& params,
                          const std::function<Var(Tape&, const std::vector<Var>&)>& build) {
    Tape tape;
    std::vector<Var> leaves = params.leaves(tape);
    Var loss = build(tape, leaves);
    LossEval out;
    out.value = tape.value(loss)[0];
    tape.backward(loss);
    out.grads.reserve(leaves.size());
    for (Var l : leaves) out.grads.push_back(tape.grad(l));
    return out;
}

struct FdResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

/// Central-difference gradient check. `f` must be deterministic and read
/// parameter values from `params` at call time. Relative error per entry is
/// |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
inline FdResult fd_check(ParamStore& params, const std::function<LossEval()>& f,
                         double h = 1e-6) {
    LossEval analytic = f();
    FdResult res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = params[pi];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            double orig = p.value[j];
            p.value[j] = orig + h;
            double lp = f().value;
            p.value[j] = orig - h;
            double lm = f().value;
            p.value[j] = orig;
            double numeric = (lp - lm) / (2.0 * h);
            double a = analytic.grads[pi][j];
            double denom = std::fabs(a) + std::fabs(numeric);
            if (denom < 1e-12) denom = 1e-12;
            double rel = std::fabs(a - numeric) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = p.name;
                res.worst_index = j;
            }
        }
    }
    return res;
}

}  // namespace gady
