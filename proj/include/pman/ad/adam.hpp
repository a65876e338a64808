#pragma once

#include <map>
#include <string>

#include "pman/ad/parameters.hpp"
#include "pman/ad/tensor.hpp"

namespace pman::ad {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// First-order adaptive-moment optimizer. One instance per parameter store;
/// moment estimates are keyed by parameter name.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// Applies one update with the given learning rate. Parameters absent
    /// from `grads` are left untouched.
    void step(ParameterStore<float>& params, const std::map<std::string, Tensor<float>>& grads,
              double lr);

    std::size_t steps() const { return t_; }

private:
    AdamConfig config_;
    std::size_t t_ = 0;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
};

}  // namespace pman::ad
