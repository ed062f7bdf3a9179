#include "gsi/cascade.hpp"

#include <numeric>
#include <string>

#include "gsi/error.hpp"

namespace gsi {

const char* to_string(BasisBuildOrigin origin) {
    switch (origin) {
        case BasisBuildOrigin::FullSvd: return "full_svd";
        case BasisBuildOrigin::Inherited: return "inherited";
    }
    return "unknown";
}

CoherenceProfile coherence_profile(std::span<const SubspaceBasis> bases, std::size_t k) {
    if (bases.size() < 2) throw ConfigError("coherence_profile: need at least two bases");
    if (k < 1) throw ConfigError("coherence_profile: k must be positive");
    for (std::size_t i = 0; i < bases.size(); ++i) {
        if (bases[i].rank() < k) {
            throw ConfigError("coherence_profile: basis at layer " + std::to_string(i) +
                              " has rank " + std::to_string(bases[i].rank()) +
                              " < k = " + std::to_string(k));
        }
    }
    CoherenceProfile profile;
    for (std::size_t i = 1; i < bases.size(); ++i) {
        const std::vector<double> cos =
            principal_angle_cosines(bases[i - 1].truncated(k), bases[i].truncated(k));
        CoherencePair pair;
        pair.layer = i;
        pair.k = k;
        pair.mean_cosine = std::accumulate(cos.begin(), cos.end(), 0.0) / static_cast<double>(cos.size());
        pair.min_cosine = cos.back();  // cosines are non-increasing
        profile.pairs.push_back(pair);
    }
    return profile;
}

InheritResult inherit_and_correct(const SubspaceBasis& prev, const DenseMatrix& next_rows,
                                  double eta, std::size_t k_max) {
    if (next_rows.cols() != prev.dim()) {
        throw ConfigError("inherit_and_correct: row dimension does not match basis dim");
    }
    if (k_max < prev.rank()) {
        throw ConfigError("inherit_and_correct: k_max below the inherited rank");
    }

    InheritResult out{prev.with_origin(BasisOrigin::Inherited), {}};
    out.entry.origin = BasisBuildOrigin::Inherited;

    for (std::size_t r = 0; r < next_rows.rows(); ++r) {
        if (out.basis.rank() >= k_max) {
            // Basis is full; note whether the remaining rows still fall outside it.
            if (project(out.basis, next_rows.row(r)).rho > eta) out.entry.exhausted = true;
            continue;
        }
        InsertResult ins = dgks_insert(out.basis, next_rows.row(r), eta);
        if (ins.accepted) {
            out.basis = std::move(ins.basis);
            ++out.entry.acceptances;
        }
    }
    out.entry.final_rank = out.basis.rank();
    return out;
}

StreamResult stream_track(SubspaceBasis basis, std::span<const DenseMatrix* const> weights,
                          std::span<CachedImage> images, const DenseMatrix& stream_rows,
                          double eta, std::size_t k_max) {
    if (weights.size() != images.size()) {
        throw ConfigError("stream_track: weights and images must pair up");
    }
    if (stream_rows.cols() != basis.dim()) {
        throw ConfigError("stream_track: row dimension does not match basis dim");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].basis_fingerprint != basis.fingerprint()) {
            throw StaleCacheError("stream_track: image '" + images[i].weight_id +
                                  "' does not match the starting basis");
        }
    }

    StreamResult out{std::move(basis), {}, 0};
    for (std::size_t r = 0; r < stream_rows.rows(); ++r) {
        if (out.basis.rank() >= k_max) break;
        InsertResult ins = dgks_insert(out.basis, stream_rows.row(r), eta);
        if (!ins.accepted) continue;
        out.basis = std::move(ins.basis);
        out.timeline.push_back({r, out.basis.rank()});
        for (std::size_t i = 0; i < images.size(); ++i) {
            images[i] = cache_image(*weights[i], out.basis, images[i].weight_id);
            ++out.image_rebuilds;
        }
    }
    return out;
}

}  // namespace gsi
