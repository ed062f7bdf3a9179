#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gsi/gated_map.hpp"
#include "gsi/subspace.hpp"

namespace gsi {

// Principal-angle summary between the bases of consecutive layers, truncated
// to a common rank k.
struct CoherencePair {
    std::size_t layer = 0;  // compares layer-1 against layer
    double mean_cosine = 0.0;
    double min_cosine = 0.0;
    std::size_t k = 0;
};

struct CoherenceProfile {
    std::vector<CoherencePair> pairs;
};

CoherenceProfile coherence_profile(std::span<const SubspaceBasis> bases, std::size_t k);

enum class BasisBuildOrigin { FullSvd, Inherited };

const char* to_string(BasisBuildOrigin origin);

// How each layer's basis was produced during calibration.
struct CascadeEntry {
    BasisBuildOrigin origin = BasisBuildOrigin::FullSvd;
    std::size_t acceptances = 0;  // corrective insertions on top of inheritance
    std::size_t final_rank = 0;
    bool exhausted = false;  // hit k_max while rows still wanted to grow it
};

struct CascadeTrace {
    std::vector<CascadeEntry> layers;
};

struct InheritResult {
    SubspaceBasis basis;
    CascadeEntry entry;
};

// Seed the next layer's basis from the previous layer's and stream the next
// layer's calibration rows through dgks_insert, growing up to k_max columns.
// After the pass every row either projects inside eta or the basis is
// exhausted at k_max (recorded).
InheritResult inherit_and_correct(const SubspaceBasis& prev, const DenseMatrix& next_rows,
                                  double eta, std::size_t k_max);

struct StreamUpdate {
    std::size_t stream_index = 0;  // row that triggered the insertion
    std::size_t new_rank = 0;
};

struct StreamResult {
    SubspaceBasis basis;
    std::vector<StreamUpdate> timeline;
    std::size_t image_rebuilds = 0;  // total image refreshes across all weights
};

// Online tracking: stream rows into the basis and rebuild every cached image
// whenever an insertion is accepted, so images never go stale. weights[i]
// must be the weight images[i] was cut from.
StreamResult stream_track(SubspaceBasis basis, std::span<const DenseMatrix* const> weights,
                          std::span<CachedImage> images, const DenseMatrix& stream_rows,
                          double eta, std::size_t k_max);

}  // namespace gsi
