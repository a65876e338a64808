#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pman::train {

/// Draws batches of P identities x Q images. Identities are visited in a
/// shuffled order per epoch, so each one appears at least once per epoch;
/// the last batch of an epoch is topped up with other identities. An
/// identity with fewer than Q images is sampled with replacement.
class PqSampler {
public:
    /// labels[i] is the class of sample i, in [0, num_classes).
    PqSampler(const std::vector<int>& labels, int P, int Q, std::uint64_t seed);

    std::vector<std::size_t> next_batch();

    int batch_size() const { return P_ * Q_; }
    int batches_per_epoch() const;
    int num_identities() const { return static_cast<int>(by_id_.size()); }

private:
    void refill();

    int P_, Q_;
    std::mt19937_64 rng_;
    std::vector<std::vector<std::size_t>> by_id_;
    std::vector<int> order_;
    std::size_t cursor_ = 0;
};

}  // namespace pman::train
