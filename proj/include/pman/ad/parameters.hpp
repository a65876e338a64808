#pragma once

#include <map>
#include <string>
#include <vector>

#include "pman/ad/tensor.hpp"

namespace pman::ad {

/// Named trainable tensors plus non-trainable buffers (batch-norm running
/// statistics). Names are the stable keys used by graphs and checkpoints.
template <typename T>
class ParameterStore {
public:
    Tensor<T>& add(const std::string& name, Tensor<T> value);
    Tensor<T>& add_buffer(const std::string& name, Tensor<T> value);

    bool has(const std::string& name) const { return params_.count(name) != 0; }
    bool has_buffer(const std::string& name) const { return buffers_.count(name) != 0; }

    Tensor<T>& get(const std::string& name);
    const Tensor<T>& get(const std::string& name) const;
    Tensor<T>& buffer(const std::string& name);
    const Tensor<T>& buffer(const std::string& name) const;

    std::map<std::string, Tensor<T>>& params() { return params_; }
    const std::map<std::string, Tensor<T>>& params() const { return params_; }
    std::map<std::string, Tensor<T>>& buffers() { return buffers_; }
    const std::map<std::string, Tensor<T>>& buffers() const { return buffers_; }

    std::vector<std::string> names() const;
    std::size_t parameter_count() const;
    void zero_grads();

    template <typename U>
    ParameterStore<U> cast() const {
        ParameterStore<U> out;
        for (const auto& [k, v] : params_) out.add(k, v.template cast<U>());
        for (const auto& [k, v] : buffers_) out.add_buffer(k, v.template cast<U>());
        return out;
    }

private:
    std::map<std::string, Tensor<T>> params_;
    std::map<std::string, Tensor<T>> buffers_;
};

extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace pman::ad
