#include "pman/train/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "pman/error.hpp"

namespace pman::train {

PqSampler::PqSampler(const std::vector<int>& labels, int P, int Q, std::uint64_t seed) : P_(P), Q_(Q), rng_(seed) {
    if (P < 1 || Q < 1) throw ValidationError("sampler: P and Q must be positive");
    int n = 0;
    for (int l : labels) {
        if (l < 0) throw ValidationError("sampler: negative label");
        n = std::max(n, l + 1);
    }
    std::vector<std::vector<std::size_t>> all(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < labels.size(); ++i) all[static_cast<std::size_t>(labels[i])].push_back(i);
    for (auto& v : all)
        if (!v.empty()) by_id_.push_back(std::move(v));
    if (static_cast<int>(by_id_.size()) < P) {
        throw ValidationError("sampler: " + std::to_string(by_id_.size()) + " identities, batches need P=" +
                              std::to_string(P));
    }
}

int PqSampler::batches_per_epoch() const { return (num_identities() + P_ - 1) / P_; }

void PqSampler::refill() {
    order_.resize(by_id_.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::shuffle(order_.begin(), order_.end(), rng_);
    const std::size_t rem = order_.size() % static_cast<std::size_t>(P_);
    if (rem != 0) {
        std::vector<int> tail(order_.end() - static_cast<long>(rem), order_.end());
        std::vector<int> rest;
        for (int i = 0; i < static_cast<int>(by_id_.size()); ++i)
            if (std::find(tail.begin(), tail.end(), i) == tail.end()) rest.push_back(i);
        std::shuffle(rest.begin(), rest.end(), rng_);
        for (std::size_t k = 0; k < static_cast<std::size_t>(P_) - rem; ++k) order_.push_back(rest[k]);
    }
    cursor_ = 0;
}

std::vector<std::size_t> PqSampler::next_batch() {
    if (cursor_ >= order_.size()) refill();
    std::vector<std::size_t> batch;
    batch.reserve(static_cast<std::size_t>(P_ * Q_));
    for (int p = 0; p < P_; ++p) {
        auto pool = by_id_[static_cast<std::size_t>(order_[cursor_++])];
        if (static_cast<int>(pool.size()) >= Q_) {
            std::shuffle(pool.begin(), pool.end(), rng_);
            batch.insert(batch.end(), pool.begin(), pool.begin() + Q_);
        } else {
            std::uniform_int_distribution<std::size_t> u(0, pool.size() - 1);
            for (int q = 0; q < Q_; ++q) batch.push_back(pool[u(rng_)]);
        }
    }
    return batch;
}

}  // namespace pman::train
