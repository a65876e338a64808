#include "pman/ad/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pman/error.hpp"

namespace pman::ad {

const GradCheckEntry* GradCheckReport::worst() const {
    const GradCheckEntry* w = nullptr;
    for (const auto& e : entries)
        if (!w || e.max_rel_error > w->max_rel_error) w = &e;
    return w;
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << (pass ? "PASS" : "FAIL");
    if (const auto* w = worst()) {
        os << " worst=" << w->name << "[" << w->worst_index << "] rel=" << w->max_rel_error
           << " analytic=" << w->analytic << " numeric=" << w->numeric;
    }
    for (const auto& e : entries)
        if (!e.pass) os << "\n  failed: " << (e.is_input ? "input " : "param ") << e.name;
    return os.str();
}

GradCheckReport grad_check(const Graph& graph, ParameterStore<double>& params,
                           const std::map<std::string, Tensor<double>>& inputs,
                           const std::string& output, const GradCheckOptions& options) {
    const auto saved_buffers = params.buffers();

    Executor<double> exec(graph, params, options.mode);
    for (const auto& name : options.inputs) exec.set_input_requires_grad(name);
    const auto first = exec.forward(inputs, {output});
    if (first.at(output).numel() != 1) {
        throw ShapeError("grad_check: output '" + output + "' is not a scalar (" +
                         shape_str(first.at(output).shape()) + ")");
    }
    exec.backward(output);

    std::map<std::string, Tensor<double>> analytic = exec.param_grads();
    std::map<std::string, Tensor<double>> analytic_inputs;
    for (const auto& name : options.inputs) analytic_inputs[name] = exec.input_grad(name);
    if (options.tamper) {
        options.tamper(analytic);
        options.tamper(analytic_inputs);
    }

    auto evaluate = [&](const std::map<std::string, Tensor<double>>& in) {
        Executor<double> probe(graph, params, options.mode);
        return probe.forward(in, {output}).at(output)[0];
    };

    GradCheckReport report;
    auto compare = [&](const std::string& name, bool is_input, std::vector<double>& values,
                       const Tensor<double>& grad, const std::map<std::string, Tensor<double>>* in) {
        GradCheckEntry e{name, is_input};
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + options.step;
            const double up = evaluate(*in);
            values[i] = orig - options.step;
            const double down = evaluate(*in);
            values[i] = orig;
            const double numeric = (up - down) / (2.0 * options.step);
            const double a = grad[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
            const double rel = std::abs(a - numeric) / denom;
            if (i == 0 || rel > e.max_rel_error) {
                e.max_rel_error = rel;
                e.worst_index = i;
                e.analytic = a;
                e.numeric = numeric;
            }
        }
        e.pass = e.max_rel_error <= options.tolerance;
        report.pass = report.pass && e.pass;
        report.entries.push_back(e);
    };

    for (auto& [name, tensor] : params.params()) {
        if (!graph.params().count(name)) continue;
        compare(name, false, tensor.values(), analytic.at(name), &inputs);
    }
    if (!options.inputs.empty()) {
        auto perturbed = inputs;
        for (const auto& name : options.inputs) {
            compare(name, true, perturbed.at(name).values(), analytic_inputs.at(name), &perturbed);
        }
    }
    params.buffers() = saved_buffers;
    return report;
}

}  // namespace pman::ad
