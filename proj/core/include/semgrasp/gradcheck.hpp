#pragma once

#include <map>
#include <string>
#include <vector>

#include "semgrasp/graph.hpp"

namespace semgrasp {

struct GradCheckEntry {
    std::string param;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::vector<GradCheckEntry> per_param;
    bool passed(double tol) const { return max_rel_err < tol; }
};

/// Compares analytic gradients against central finite differences in double
/// precision. The scalar loss is a fixed random linear functional of the
/// listed output nodes, which exercises every entry of each head Jacobian.
/// Batch-norm layers run on batch statistics with running stats frozen.
///
/// `h` is the central-difference step; relative error is
/// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport grad_check(const Graph& graph, const ParamStoreD& params,
                           const std::map<std::string, const TensorD*>& inputs,
                           const std::vector<std::string>& output_nodes, uint64_t loss_seed,
                           double h = 1e-5);

}  // namespace semgrasp
