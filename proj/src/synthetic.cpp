#include "gsi/synthetic.hpp"

#include <cmath>

#include "gsi/error.hpp"
#include "gsi/prng.hpp"
#include "gsi/subspace.hpp"

namespace gsi {

namespace {

// Orthonormal rows x cols matrix with every column orthogonal to the given
// fixed directions (passed as unit columns of `avoid`, may be empty).
DenseMatrix orthonormal_plane(std::size_t rows, std::size_t cols, const DenseMatrix& avoid,
                              Prng& rng) {
    DenseMatrix plane(rows, cols);
    std::vector<double> v(rows);
    for (std::size_t c = 0; c < cols; ++c) {
        double n = 0.0;
        while (true) {
            for (double& x : v) x = rng.gaussian();
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t a = 0; a < avoid.cols(); ++a) {
                    double proj = 0.0;
                    for (std::size_t r = 0; r < rows; ++r) proj += avoid.at(r, a) * v[r];
                    for (std::size_t r = 0; r < rows; ++r) v[r] -= proj * avoid.at(r, a);
                }
                for (std::size_t p = 0; p < c; ++p) {
                    double proj = 0.0;
                    for (std::size_t r = 0; r < rows; ++r) proj += plane.at(r, p) * v[r];
                    for (std::size_t r = 0; r < rows; ++r) v[r] -= proj * plane.at(r, p);
                }
            }
            n = norm2(v);
            if (n > 1e-6) break;
        }
        for (std::size_t r = 0; r < rows; ++r) plane.at(r, c) = v[r] / n;
    }
    return plane;
}

DenseMatrix random_square(std::size_t n, double scale, Prng& rng) {
    DenseMatrix m(n, n);
    for (double& v : m.data()) v = scale * rng.gaussian();
    return m;
}

DenseMatrix scaled_identity(std::size_t n, double gain) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = gain;
    return m;
}

// W = left * core * right^T, the only weight form the planted model uses.
DenseMatrix sandwich(const DenseMatrix& left, const DenseMatrix& core, const DenseMatrix& right) {
    return matmul(matmul(left, core), transposed(right));
}

// Vertices of the regular r-simplex: r+1 unit vectors in R^r with pairwise
// cosine -1/r. Derived from the centered identity's row space.
DenseMatrix simplex_vertices(std::size_t r) {
    const std::size_t n = r + 1;
    DenseMatrix centered(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            centered.at(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
        }
    }
    ThinSvd svd = thin_svd(centered);
    DenseMatrix verts(n, r);  // coordinates in the top-r right singular directions
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < r; ++j) {
            double coord = 0.0;
            for (std::size_t c = 0; c < n; ++c) coord += centered.at(i, c) * svd.v.at(c, j);
            verts.at(i, j) = coord;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto row = verts.row(i);
        const double nrm = norm2(row);
        for (double& v : row) v /= nrm;
    }
    return verts;
}

}  // namespace

PlantedModel make_planted_model(const PlantedSpec& spec) {
    const std::size_t d = spec.d_model;
    const std::size_t r = spec.planted_rank;
    const std::size_t vocab = spec.vocab == 0 ? r + 1 : spec.vocab;
    if (r < 2) throw ConfigError("planted model: planted_rank must be at least 2");
    if (d < r + 1) throw ConfigError("planted model: d_model must exceed planted_rank");
    if (spec.d_ff < r) throw ConfigError("planted model: d_ff must be at least planted_rank");
    if (vocab < 2 || vocab > r + 1) {
        throw ConfigError("planted model: vocab must be in [2, planted_rank + 1]");
    }

    Prng rng(spec.seed);

    DenseMatrix ones_dir(d, 1);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t i = 0; i < d; ++i) ones_dir.at(i, 0) = inv_sqrt_d;

    const DenseMatrix plane = orthonormal_plane(d, r, ones_dir, rng);
    const DenseMatrix ff_plane = orthonormal_plane(spec.d_ff, r, DenseMatrix(), rng);

    ModelConfig cfg;
    cfg.d_model = d;
    cfg.n_layers = spec.n_layers;
    cfg.n_heads = 1;  // keeps mixed attention values inside the plane
    cfg.d_ff = spec.d_ff;
    cfg.vocab = vocab;
    cfg.max_seq = spec.max_seq;
    cfg.pos_embedding = PosEmbedding::None;
    cfg.validate();

    ModelWeights w;
    w.config = cfg;

    const DenseMatrix verts = simplex_vertices(r);
    w.tok_emb = DenseMatrix(vocab, d);
    for (std::size_t v = 0; v < vocab; ++v) {
        const std::vector<double> row = matvec(plane, verts.row(v));
        for (std::size_t j = 0; j < d; ++j) w.tok_emb.at(v, j) = row[j];
    }

    w.lnf_gain.assign(d, 1.0);
    w.lnf_bias.assign(d, 0.0);
    w.layers.resize(cfg.n_layers);
    for (LayerWeights& l : w.layers) {
        l.ln1_gain.assign(d, 1.0);
        l.ln1_bias.assign(d, 0.0);
        l.ln2_gain.assign(d, 1.0);
        l.ln2_bias.assign(d, 0.0);

        const double s = spec.mix_scale / std::sqrt(static_cast<double>(r));
        // Identity cores make the attention path the model's predictive
        // signal: with simplex embeddings, query-key scores are sharply
        // self-selective (same-token dot ~ +d, cross-token ~ -d/r), so a
        // position attends to earlier occurrences of its own token and the
        // value/output path feeds that embedding back into the stream.
        // Random cores would scramble the signal and leave nothing for a
        // lossy projection to break. mix_scale sets the feedback strength;
        // the MLP keeps random cores at a matching scale as in-plane noise.
        const DenseMatrix wq = sandwich(plane, scaled_identity(r, 1.0), plane);
        const DenseMatrix wk = sandwich(plane, scaled_identity(r, 1.0), plane);
        const DenseMatrix wv = sandwich(plane, scaled_identity(r, spec.mix_scale), plane);
        l.qkv = DenseMatrix(3 * d, d);
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                l.qkv.at(i, j) = wq.at(i, j);
                l.qkv.at(d + i, j) = wk.at(i, j);
                l.qkv.at(2 * d + i, j) = wv.at(i, j);
            }
        }
        l.out = sandwich(plane, scaled_identity(r, spec.mix_scale), plane);
        l.up = sandwich(ff_plane, random_square(r, s, rng), plane);
        l.down = sandwich(plane, random_square(r, s, rng), ff_plane);
    }
    w.validate();
    return {std::move(w), plane};
}

std::vector<std::int32_t> block_tokens(std::size_t length, std::size_t run, std::size_t vocab,
                                       std::uint64_t seed) {
    if (length == 0 || run == 0 || vocab == 0) {
        throw ConfigError("block_tokens: length, run and vocab must be positive");
    }
    Prng rng(seed);
    std::vector<std::int32_t> out;
    out.reserve(length);
    while (out.size() < length) {
        const std::int32_t tok = static_cast<std::int32_t>(rng.below(vocab));
        for (std::size_t i = 0; i < run && out.size() < length; ++i) out.push_back(tok);
    }
    return out;
}

std::vector<std::int32_t> uniform_tokens(std::size_t length, std::size_t vocab, std::uint64_t seed) {
    if (length == 0 || vocab == 0) throw ConfigError("uniform_tokens: length and vocab must be positive");
    Prng rng(seed);
    std::vector<std::int32_t> out;
    out.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
        out.push_back(static_cast<std::int32_t>(rng.below(vocab)));
    }
    return out;
}

}  // namespace gsi
