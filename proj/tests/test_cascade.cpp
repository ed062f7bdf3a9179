#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "gsi/cascade.hpp"
#include "gsi/error.hpp"
#include "test_helpers.hpp"

using namespace gsi;
using namespace gsi::testing;

namespace {

SubspaceBasis basis_from(const DenseMatrix& samples, std::size_t k) {
    return build_basis(samples, k);
}

// Max rho of any row against the basis.
double worst_row_rho(const SubspaceBasis& basis, const DenseMatrix& rows) {
    double worst = 0.0;
    for (std::size_t t = 0; t < rows.rows(); ++t) {
        std::vector<double> x(rows.cols());
        for (std::size_t j = 0; j < rows.cols(); ++j) x[j] = rows.at(t, j);
        worst = std::max(worst, project(basis, x).rho);
    }
    return worst;
}

}  // namespace

TEST_CASE("coherence profile of an identical stack is all ones") {
    const DenseMatrix samples = random_matrix(40, 16, 70);
    const SubspaceBasis b = basis_from(samples, 6);
    const std::vector<SubspaceBasis> stack = {b, b, b};
    const CoherenceProfile prof = coherence_profile(stack, 6);
    REQUIRE(prof.pairs.size() == 2);
    for (const CoherencePair& p : prof.pairs) {
        CHECK(p.k == 6);
        CHECK(p.mean_cosine == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(p.min_cosine == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(prof.pairs[0].layer == 1);
    CHECK(prof.pairs[1].layer == 2);
}

TEST_CASE("coherence profile separates disjoint spans") {
    // Coordinate planes sharing no directions.
    DenseMatrix a(8, 2), b(8, 2);
    a.at(0, 0) = 1.0;
    a.at(1, 1) = 1.0;
    b.at(2, 0) = 1.0;
    b.at(3, 1) = 1.0;
    const std::vector<SubspaceBasis> stack = {
        SubspaceBasis::from_columns(a, BasisOrigin::Calibrated),
        SubspaceBasis::from_columns(b, BasisOrigin::Calibrated)};
    const CoherenceProfile prof = coherence_profile(stack, 2);
    REQUIRE(prof.pairs.size() == 1);
    CHECK(prof.pairs[0].mean_cosine == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(prof.pairs[0].min_cosine == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("coherence profile validates inputs") {
    const SubspaceBasis b = basis_from(random_matrix(30, 12, 71), 5);
    CHECK_THROWS_AS(coherence_profile(std::vector<SubspaceBasis>{b}, 3), ConfigError);
    const std::vector<SubspaceBasis> stack = {b, b};
    CHECK_THROWS_AS(coherence_profile(stack, 6), ConfigError);  // k > rank
    CHECK_THROWS_AS(coherence_profile(stack, 0), ConfigError);
}

TEST_CASE("inheritance of an in-span stream accepts nothing") {
    const DenseMatrix plane = basis_from(random_matrix(40, 20, 72), 5).columns();
    const SubspaceBasis prev = basis_from(rows_in_span(plane, 50, 73), 5);
    const DenseMatrix next_rows = rows_in_span(plane, 30, 74);

    const InheritResult res = inherit_and_correct(prev, next_rows, 0.25, 20);
    CHECK(res.entry.origin == BasisBuildOrigin::Inherited);
    CHECK(res.entry.acceptances == 0);
    CHECK(res.entry.final_rank == 5);
    CHECK(!res.entry.exhausted);
    CHECK(res.basis.origin() == BasisOrigin::Inherited);
    CHECK(res.basis.fingerprint() == prev.fingerprint());
    CHECK(worst_row_rho(res.basis, next_rows) <= 1e-8);
}

TEST_CASE("inheritance grows the basis on novel directions and covers the stream") {
    const std::size_t d = 24;
    const SubspaceBasis prev = basis_from(random_matrix(60, d, 75), 6);
    const DenseMatrix next_rows = random_matrix(40, d, 76);  // full-dimensional stream

    const double eta = 0.3;
    const InheritResult res = inherit_and_correct(prev, next_rows, eta, d);
    CHECK(res.entry.acceptances > 0);
    CHECK(res.entry.final_rank == 6 + res.entry.acceptances);
    CHECK(!res.entry.exhausted);
    CHECK(res.basis.origin() == BasisOrigin::Streamed);
    CHECK(res.basis.orthonormality_defect() <= 1e-8);
    // Insertions only shrink later residuals, so after the pass every row of
    // the stream projects within eta.
    CHECK(worst_row_rho(res.basis, next_rows) <= eta + 1e-12);
}

TEST_CASE("inheritance respects the growth cap and reports exhaustion") {
    const std::size_t d = 16;
    const SubspaceBasis prev = basis_from(random_matrix(40, d, 77), 4);
    const DenseMatrix next_rows = random_matrix(30, d, 78);

    const InheritResult capped = inherit_and_correct(prev, next_rows, 0.2, 5);
    CHECK(capped.entry.final_rank <= 5);
    CHECK(capped.entry.acceptances <= 1);
    CHECK(capped.entry.exhausted);  // a 16-dim stream cannot fit in 5 directions at eta 0.2

    const InheritResult frozen = inherit_and_correct(prev, next_rows, 0.2, 4);
    CHECK(frozen.entry.acceptances == 0);
    CHECK(frozen.entry.final_rank == 4);
    CHECK(frozen.entry.exhausted);

    CHECK_THROWS_AS(inherit_and_correct(prev, next_rows, 0.2, 3), ConfigError);  // cap below rank
    CHECK_THROWS_AS(inherit_and_correct(prev, next_rows, 0.0, 8), ConfigError);
    CHECK_THROWS_AS(inherit_and_correct(prev, random_matrix(30, d + 1, 79), 0.2, 8), ConfigError);
}

TEST_CASE("cascade beats independent calibration on coherent stacks") {
    // Three layers sharing one slowly rotating subspace: layer l's stream
    // lives in span(plane columns l..l+4).
    const std::size_t d = 32, span = 5, layers = 3;
    const DenseMatrix wide = basis_from(random_matrix(80, d, 80), span + layers - 1).columns();

    std::vector<DenseMatrix> streams;
    for (std::size_t l = 0; l < layers; ++l) {
        DenseMatrix window(d, span);
        for (std::size_t r = 0; r < d; ++r) {
            for (std::size_t c = 0; c < span; ++c) window.at(r, c) = wide.at(r, c + l);
        }
        streams.push_back(rows_in_span(window, 40, 81 + l));
    }

    SubspaceBasis current = basis_from(streams[0], span);
    std::size_t cascade_acceptances = 0;
    for (std::size_t l = 1; l < layers; ++l) {
        InheritResult res = inherit_and_correct(current, streams[l], 0.25, d);
        cascade_acceptances += res.entry.acceptances;
        current = res.basis;
    }
    // Independent calibration would build span vectors per deeper layer.
    CHECK(cascade_acceptances > 0);
    CHECK(cascade_acceptances < (layers - 1) * span);
}

TEST_CASE("streamed tracking leaves a stationary stream untouched") {
    const std::size_t d = 20;
    const DenseMatrix plane = basis_from(random_matrix(50, d, 82), 6).columns();
    SubspaceBasis basis = basis_from(rows_in_span(plane, 40, 83), 6);

    const DenseMatrix w0 = random_matrix(d, d, 84);
    const DenseMatrix w1 = random_matrix(14, d, 85);
    std::vector<CachedImage> images = {cache_image(w0, basis, "w0"), cache_image(w1, basis, "w1")};
    const std::vector<const DenseMatrix*> weights = {&w0, &w1};

    const DenseMatrix stream = rows_in_span(plane, 25, 86);
    const StreamResult res = stream_track(basis, weights, images, stream, 0.25, d);
    CHECK(res.timeline.empty());
    CHECK(res.image_rebuilds == 0);
    CHECK(res.basis.fingerprint() == basis.fingerprint());
    CHECK(images[0].basis_fingerprint == res.basis.fingerprint());
}

TEST_CASE("streamed tracking rebuilds every image on each acceptance") {
    const std::size_t d = 18;
    SubspaceBasis basis = basis_from(random_matrix(30, d, 87), 4);

    const DenseMatrix w0 = random_matrix(d, d, 88);
    const DenseMatrix w1 = random_matrix(10, d, 89);
    std::vector<CachedImage> images = {cache_image(w0, basis, "w0"), cache_image(w1, basis, "w1")};
    const std::vector<const DenseMatrix*> weights = {&w0, &w1};

    const DenseMatrix stream = random_matrix(20, d, 90);
    const StreamResult res = stream_track(basis, weights, images, stream, 0.25, d);
    CHECK(!res.timeline.empty());
    CHECK(res.image_rebuilds == res.timeline.size() * weights.size());

    // Ranks in the timeline grow one at a time.
    std::size_t prev_rank = 4;
    for (const StreamUpdate& u : res.timeline) {
        CHECK(u.new_rank == prev_rank + 1);
        CHECK(u.stream_index < stream.rows());
        prev_rank = u.new_rank;
    }
    CHECK(res.basis.rank() == prev_rank);

    // Final images pair with the final basis: a dispatch goes through.
    const std::vector<double> x = random_vector(d, 91);
    CHECK_NOTHROW(gated_forward(x, w0, images[0], res.basis, ExecutionMode::gated(0.5)));
    CHECK_NOTHROW(gated_forward(x, w1, images[1], res.basis, ExecutionMode::gated(0.5)));

    // And the rebuilt image really is W V against the grown basis.
    const CachedImage fresh = cache_image(w0, res.basis, "w0");
    CHECK(max_abs_diff(fresh.matrix, images[0].matrix) <= 1e-12);
}

TEST_CASE("streamed tracking refuses stale image pairings") {
    const std::size_t d = 12;
    SubspaceBasis basis = basis_from(random_matrix(30, d, 92), 4);
    SubspaceBasis other = basis_from(random_matrix(30, d, 93), 4);

    const DenseMatrix w0 = random_matrix(d, d, 94);
    std::vector<CachedImage> images = {cache_image(w0, other, "w0")};  // cut on the wrong basis
    const std::vector<const DenseMatrix*> weights = {&w0};
    const DenseMatrix stream = random_matrix(5, d, 95);
    CHECK_THROWS_AS(stream_track(basis, weights, images, stream, 0.25, d), StaleCacheError);

    std::vector<CachedImage> ok = {cache_image(w0, basis, "w0")};
    std::vector<CachedImage> none;
    const std::vector<const DenseMatrix*> two = {&w0, &w0};
    CHECK_THROWS_AS(stream_track(basis, two, ok, stream, 0.25, d), ConfigError);  // count mismatch
    CHECK_NOTHROW(stream_track(basis, weights, ok, stream, 0.25, d));
}
