#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pman/ad/executor.hpp"
#include "pman/ad/graph.hpp"
#include "pman/ad/parameters.hpp"

namespace pman::ad {

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-5;
    /// Denominator floor of the relative error, so that gradients near zero
    /// are compared in absolute terms.
    double floor = 1e-3;
    Mode mode = Mode::Train;
    /// Inputs whose gradients are checked in addition to every parameter.
    std::vector<std::string> inputs;
    /// Applied to the analytic gradients before comparison. Test hook for
    /// negative controls.
    std::function<void(std::map<std::string, Tensor<double>>&)> tamper;
};

struct GradCheckEntry {
    std::string name;
    bool is_input = false;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    bool pass = true;
    std::vector<GradCheckEntry> entries;

    /// Entry with the largest relative error.
    const GradCheckEntry* worst() const;
    std::string summary() const;
};

/// Compares reverse-mode gradients of a scalar graph output against central
/// finite differences for every parameter (and the requested inputs).
/// Batch-norm running statistics are restored afterwards.
GradCheckReport grad_check(const Graph& graph, ParameterStore<double>& params,
                           const std::map<std::string, Tensor<double>>& inputs,
                           const std::string& output, const GradCheckOptions& options = {});

}  // namespace pman::ad
