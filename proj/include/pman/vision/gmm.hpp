#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace pman::vision {

using Color = std::array<double, 3>;

struct GmmComponent {
    double weight = 0.0;
    Color mean{};
    std::array<double, 9> cov{};  // row-major 3x3
};

struct Gmm {
    std::vector<GmmComponent> components;

    /// log sum_k w_k N(x | mu_k, Sigma_k)
    double log_density(const Color& x) const;
    /// Batched log_density; factorises each covariance once.
    std::vector<double> log_densities(std::span<const Color> xs) const;
    double mean_log_likelihood(std::span<const Color> xs) const;
    void validate() const;
};

struct GmmFitOptions {
    int iters = 20;
    /// Added to every covariance diagonal.
    double regularization = 1e-4;
};

struct GmmFit {
    Gmm model;
    /// Mean log-likelihood after initialisation and after each accepted EM step.
    std::vector<double> log_likelihood;
};

/// k-means++ seeded hard clustering followed by EM. Components that lose all
/// support are dropped. Throws ValidationError on an empty pixel list or k < 1.
GmmFit gmm_fit_trace(std::span<const Color> pixels, int k, std::uint64_t seed,
                     const GmmFitOptions& options = {});
Gmm gmm_fit(std::span<const Color> pixels, int k, int iters, std::uint64_t seed);

}  // namespace pman::vision
