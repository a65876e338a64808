#include "pman/vision/gmm.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pman/error.hpp"
#include "pman/vision/kmeans.hpp"

namespace pman::vision {

namespace {

struct Factored {
    double log_norm;  // log w - 0.5 (3 log 2pi + log det)
    Eigen::Vector3d mean;
    Eigen::Matrix3d inv;
};

std::vector<Factored> factor(const Gmm& g) {
    std::vector<Factored> out;
    out.reserve(g.components.size());
    for (const auto& c : g.components) {
        const Eigen::Matrix3d cov = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(c.cov.data());
        Eigen::LLT<Eigen::Matrix3d> llt(cov);
        if (llt.info() != Eigen::Success) throw InvariantError("gmm: covariance is not positive definite");
        const Eigen::Matrix3d L = llt.matrixL();
        const double logdet = 2.0 * L.diagonal().array().log().sum();
        Factored f;
        f.log_norm = std::log(c.weight) - 0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + logdet);
        f.mean = Eigen::Vector3d(c.mean[0], c.mean[1], c.mean[2]);
        f.inv = llt.solve(Eigen::Matrix3d::Identity());
        out.push_back(f);
    }
    return out;
}

// Per-component log(w_k N(x)) into `terms`; returns the log-sum.
double component_terms(const std::vector<Factored>& fs, const Color& x, double* terms) {
    const Eigen::Vector3d v(x[0], x[1], x[2]);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < fs.size(); ++k) {
        const Eigen::Vector3d d = v - fs[k].mean;
        terms[k] = fs[k].log_norm - 0.5 * d.dot(fs[k].inv * d);
        mx = std::max(mx, terms[k]);
    }
    double s = 0.0;
    for (std::size_t k = 0; k < fs.size(); ++k) s += std::exp(terms[k] - mx);
    return mx + std::log(s);
}

GmmComponent make_component(double weight, const Eigen::Vector3d& mean, const Eigen::Matrix3d& cov,
                            double reg) {
    GmmComponent c;
    c.weight = weight;
    for (int i = 0; i < 3; ++i) c.mean[static_cast<std::size_t>(i)] = mean[i];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            // symmetrise against rounding
            c.cov[static_cast<std::size_t>(i * 3 + j)] = 0.5 * (cov(i, j) + cov(j, i)) + (i == j ? reg : 0.0);
        }
    return c;
}

}  // namespace

double Gmm::log_density(const Color& x) const {
    const auto fs = factor(*this);
    std::vector<double> terms(fs.size());
    return component_terms(fs, x, terms.data());
}

std::vector<double> Gmm::log_densities(std::span<const Color> xs) const {
    const auto fs = factor(*this);
    std::vector<double> terms(fs.size()), out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = component_terms(fs, xs[i], terms.data());
    return out;
}

double Gmm::mean_log_likelihood(std::span<const Color> xs) const {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double v : log_densities(xs)) s += v;
    return s / static_cast<double>(xs.size());
}

void Gmm::validate() const {
    if (components.empty()) throw InvariantError("gmm: no components");
    double w = 0.0;
    for (const auto& c : components) {
        if (!(c.weight >= 0.0)) throw InvariantError("gmm: negative weight");
        w += c.weight;
        const Eigen::Matrix3d cov = Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(c.cov.data());
        if (!(cov.determinant() > 0.0)) throw InvariantError("gmm: singular covariance");
    }
    if (std::abs(w - 1.0) > 1e-6) throw InvariantError("gmm: weights sum to " + std::to_string(w));
}

GmmFit gmm_fit_trace(std::span<const Color> pixels, int k, std::uint64_t seed, const GmmFitOptions& options) {
    if (pixels.empty()) throw ValidationError("gmm_fit: empty pixel list");
    if (k < 1) throw ValidationError("gmm_fit: component count must be positive");
    const std::size_t n = pixels.size();
    k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(k), n));
    const double reg = options.regularization;

    std::vector<double> flat;
    flat.reserve(n * 3);
    for (const auto& p : pixels) flat.insert(flat.end(), p.begin(), p.end());
    const auto km = kmeans_flat(flat, 3, k, seed, 10);

    GmmFit fit;
    for (const auto& members : km.members) {
        if (members.empty()) continue;
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (auto i : members) mean += Eigen::Vector3d(pixels[i][0], pixels[i][1], pixels[i][2]);
        mean /= static_cast<double>(members.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (auto i : members) {
            const Eigen::Vector3d d = Eigen::Vector3d(pixels[i][0], pixels[i][1], pixels[i][2]) - mean;
            cov += d * d.transpose();
        }
        cov /= static_cast<double>(members.size());
        fit.model.components.push_back(
            make_component(static_cast<double>(members.size()) / static_cast<double>(n), mean, cov, reg));
    }

    double ll = fit.model.mean_log_likelihood(pixels);
    fit.log_likelihood.push_back(ll);
    std::vector<double> resp, terms;
    for (int it = 0; it < options.iters; ++it) {
        const auto fs = factor(fit.model);
        const std::size_t K = fs.size();
        resp.assign(n * K, 0.0);
        terms.assign(K, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double lse = component_terms(fs, pixels[i], terms.data());
            for (std::size_t c = 0; c < K; ++c) resp[i * K + c] = std::exp(terms[c] - lse);
        }
        Gmm next;
        for (std::size_t c = 0; c < K; ++c) {
            double nk = 0.0;
            Eigen::Vector3d mean = Eigen::Vector3d::Zero();
            for (std::size_t i = 0; i < n; ++i) {
                nk += resp[i * K + c];
                mean += resp[i * K + c] * Eigen::Vector3d(pixels[i][0], pixels[i][1], pixels[i][2]);
            }
            if (nk <= 1e-9 * static_cast<double>(n)) continue;
            mean /= nk;
            Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
            for (std::size_t i = 0; i < n; ++i) {
                const Eigen::Vector3d d = Eigen::Vector3d(pixels[i][0], pixels[i][1], pixels[i][2]) - mean;
                cov += resp[i * K + c] * (d * d.transpose());
            }
            cov /= nk;
            next.components.push_back(make_component(nk / static_cast<double>(n), mean, cov, reg));
        }
        double wsum = 0.0;
        for (const auto& c : next.components) wsum += c.weight;
        for (auto& c : next.components) c.weight /= wsum;

        const double next_ll = next.mean_log_likelihood(pixels);
        if (!(next_ll > ll)) break;
        fit.model = std::move(next);
        ll = next_ll;
        fit.log_likelihood.push_back(ll);
    }
    return fit;
}

Gmm gmm_fit(std::span<const Color> pixels, int k, int iters, std::uint64_t seed) {
    GmmFitOptions o;
    o.iters = iters;
    return gmm_fit_trace(pixels, k, seed, o).model;
}

}  // namespace pman::vision
