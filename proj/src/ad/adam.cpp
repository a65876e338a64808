#include "pman/ad/adam.hpp"

#include <cmath>

#include "pman/error.hpp"

namespace pman::ad {

void Adam::step(ParameterStore<float>& params, const std::map<std::string, Tensor<float>>& grads,
                double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
        Tensor<float>& p = params.get(name);
        if (g.numel() != p.numel()) throw ShapeError("adam: gradient shape mismatch for '" + name + "'");
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) {
            m.assign(p.numel(), 0.0);
            v.assign(p.numel(), 0.0);
        }
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double gi = g[i];
            if (config_.weight_decay != 0.0) gi += config_.weight_decay * p[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
            const double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config_.eps);
            p[i] = static_cast<float>(p[i] - update);
        }
    }
}

}  // namespace pman::ad
