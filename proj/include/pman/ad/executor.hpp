#pragma once

#include <map>
#include <string>
#include <vector>

#include "pman/ad/graph.hpp"
#include "pman/ad/parameters.hpp"
#include "pman/ad/tensor.hpp"

namespace pman::ad {

enum class Mode { Train, Eval };

/// One binding of a graph to a parameter store. Holds every intermediate
/// value of the last forward pass and the gradients of the last backward
/// pass. Gradients are kept here, not written into the store, so several
/// executors may share one frozen store. Train-mode forward passes update
/// batch-norm running statistics in the store.
template <typename T>
class Executor {
public:
    Executor(const Graph& graph, ParameterStore<T>& params, Mode mode);

    /// Requests input gradients for a named input (off by default).
    void set_input_requires_grad(const std::string& name, bool on = true);

    /// Evaluates the named outputs (all graph outputs when `outputs` is
    /// empty). Only nodes those outputs depend on are computed, so inputs
    /// feeding other outputs may be left unbound.
    std::map<std::string, Tensor<T>> forward(const std::map<std::string, Tensor<T>>& inputs,
                                             const std::vector<std::string>& outputs = {});

    /// Reverse pass seeded with the given output gradients.
    void backward(const std::map<std::string, Tensor<T>>& output_grads);
    /// Reverse pass seeded with d(output)/d(output) = 1 for a scalar output.
    void backward(const std::string& scalar_output);

    const Tensor<T>& value(NodeId id) const;
    const Tensor<T>& output(const std::string& name) const;

    /// Gradient of a parameter; all zeros if the parameter did not feed the
    /// seeded outputs.
    Tensor<T> param_grad(const std::string& name) const;
    std::map<std::string, Tensor<T>> param_grads() const;
    Tensor<T> input_grad(const std::string& name) const;

    Mode mode() const { return mode_; }
    const Graph& graph() const { return graph_; }

private:
    const Graph& graph_;
    ParameterStore<T>& params_;
    Mode mode_;
    std::vector<char> input_wants_grad_;
    std::vector<char> computed_;
    std::vector<Tensor<T>> values_;
    std::vector<std::vector<T>> aux_;
    std::vector<std::vector<std::size_t>> iaux_;
    std::vector<std::vector<T>> grads_;
    bool forward_done_ = false;
    bool backward_done_ = false;
};

extern template class Executor<float>;
extern template class Executor<double>;

}  // namespace pman::ad
