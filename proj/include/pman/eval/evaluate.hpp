#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pman/eval/metrics.hpp"
#include "pman/pmnet/pmnet.hpp"

namespace pman::eval {

/// Fused distances of two feature bundles. Teacher distances enter only when
/// both bundles carry teacher features; otherwise the teacher weight is
/// treated as 0.
DistanceMatrix bundle_distances(const pmnet::FeatureBundle& query, const pmnet::FeatureBundle& gallery,
                                const std::array<double, 3>& lambda);

/// VeRi-style: fixed query and gallery sets.
EvalReport evaluate(const pmnet::FeatureBundle& query, const pmnet::FeatureBundle& gallery, const Relevance& rel,
                    const std::array<double, 3>& lambda);

/// VehicleID-style: per repeat, one image of each identity is drawn as its
/// gallery entry and the rest are queries. Reports the mean over repeats.
EvalReport evaluate_vehicleid(const pmnet::FeatureBundle& test, const std::vector<int>& ids,
                              const std::array<double, 3>& lambda, int repeats = 10, std::uint64_t seed = 0);

/// Rows `rows` of every feature group.
pmnet::FeatureBundle select_rows(const pmnet::FeatureBundle& b, const std::vector<std::size_t>& rows);

}  // namespace pman::eval
