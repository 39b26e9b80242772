#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mct/common.hpp"
#include "mct/feature_store.hpp"
#include "mct/feature_vector.hpp"
#include "mct/rng.hpp"

namespace mct::cluster {

// ---------------------------------------------------------------------------
// distances and search

inline double l2_distance_raw(const float* a, const float* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline double l2_distance(const features::FeatureVector& a, const features::FeatureVector& b) {
    features::require_same_provenance(a.provenance, b.provenance, "l2_distance");
    require(a.dim() == b.dim(), "l2_distance: dimension mismatch (" + std::to_string(a.dim()) +
                                    " vs " + std::to_string(b.dim()) + ")");
    return l2_distance_raw(a.values.data(), b.values.data(), a.dim());
}

/// Ranked nearest neighbors, ascending distance, ties broken by record id.
struct NeighborList {
    std::string query_id;
    std::vector<std::pair<std::string, double>> neighbors;  // (record id, distance)
};

inline NeighborList knn_search(const features::FeatureVector& query,
                               const dataio::FeatureStore& store, std::size_t k,
                               const std::string& query_id = "query") {
    require(store.size() > 0, "knn_search: store is empty");
    require(k <= store.size(), "knn_search: k exceeds the store size");
    features::require_same_provenance(query.provenance, store.provenance(), "knn_search");
    require(query.dim() == store.dim(), "knn_search: dimension mismatch");

    std::vector<std::pair<double, std::string>> ranked;
    ranked.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i)
        ranked.emplace_back(l2_distance_raw(query.values.data(), store.record(i), store.dim()),
                            store.ids()[i]);
    std::sort(ranked.begin(), ranked.end());

    NeighborList out;
    out.query_id = query_id;
    for (std::size_t i = 0; i < k; ++i) out.neighbors.emplace_back(ranked[i].second, ranked[i].first);
    return out;
}

// ---------------------------------------------------------------------------
// k-means (Lloyd, k-means++ seeding, best of restarts)

struct KMeansModel {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<double> centroids;  // k x dim, row-major
    double inertia = 0.0;
    int iterations = 0;
    std::uint64_t seed = 0;
    std::vector<double> inertia_history;  // one entry per completed Lloyd iteration
    features::Provenance source;

    const double* centroid(std::size_t j) const { return centroids.data() + j * dim; }
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

inline std::size_t nearest_centroid(const double* x, const std::vector<double>& centroids,
                                    std::size_t k, std::size_t dim) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
        const double d = sq_dist(x, centroids.data() + j * dim, dim);
        if (d < best_d) {  // tie keeps the lowest centroid index
            best_d = d;
            best = j;
        }
    }
    return best;
}

inline std::size_t count_distinct_rows(const double* data, std::size_t n, std::size_t dim) {
    std::map<std::uint64_t, std::vector<std::size_t>> buckets;
    std::size_t distinct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t h = fnv1a(data + i * dim, dim * sizeof(double));
        auto& bucket = buckets[h];
        bool dup = false;
        for (const auto j : bucket)
            if (std::equal(data + i * dim, data + (i + 1) * dim, data + j * dim)) {
                dup = true;
                break;
            }
        if (!dup) {
            bucket.push_back(i);
            ++distinct;
        }
    }
    return distinct;
}

inline std::vector<double> kmeanspp_init(const double* data, std::size_t n, std::size_t dim,
                                         std::size_t k, Rng& rng) {
    std::vector<double> centroids(k * dim);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    const std::size_t first = rng.index(n);
    std::copy(data + first * dim, data + (first + 1) * dim, centroids.begin());
    for (std::size_t j = 1; j < k; ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], sq_dist(data + i * dim, centroids.data() + (j - 1) * dim, dim));
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.index(n);  // all points coincide with chosen centers
        } else {
            const double target = rng.unit() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        }
        std::copy(data + pick * dim, data + (pick + 1) * dim, centroids.begin() + j * dim);
    }
    return centroids;
}

struct LloydResult {
    std::vector<double> centroids;
    std::vector<int> assignment;
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> inertia_history;
};

inline LloydResult lloyd(const double* data, std::size_t n, std::size_t dim, std::size_t k,
                         int max_iterations, std::uint64_t seed) {
    Rng rng(seed);
    LloydResult res;
    res.centroids = kmeanspp_init(data, n, dim, k, rng);
    res.assignment.assign(n, -1);

    std::vector<std::size_t> counts(k);
    double prev_inertia = std::numeric_limits<double>::infinity();
    std::vector<double> prev_centroids;
    std::vector<int> prev_assignment;

    for (int iter = 0; iter < max_iterations; ++iter) {
        prev_centroids = res.centroids;
        prev_assignment = res.assignment;

        for (std::size_t i = 0; i < n; ++i)
            res.assignment[i] = static_cast<int>(nearest_centroid(data + i * dim, res.centroids, k, dim));

        std::fill(counts.begin(), counts.end(), 0);
        for (std::size_t i = 0; i < n; ++i) counts[static_cast<std::size_t>(res.assignment[i])]++;

        // an empty cluster adopts the point farthest from its centroid
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] > 0) continue;
            double worst = -1.0;
            std::size_t pick = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto a = static_cast<std::size_t>(res.assignment[i]);
                if (counts[a] <= 1) continue;
                const double d = sq_dist(data + i * dim, res.centroids.data() + a * dim, dim);
                if (d > worst) {
                    worst = d;
                    pick = i;
                }
            }
            counts[static_cast<std::size_t>(res.assignment[pick])]--;
            res.assignment[pick] = static_cast<int>(j);
            counts[j] = 1;
        }

        std::fill(res.centroids.begin(), res.centroids.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double* c = res.centroids.data() + static_cast<std::size_t>(res.assignment[i]) * dim;
            const double* x = data + i * dim;
            for (std::size_t t = 0; t < dim; ++t) c[t] += x[t];
        }
        for (std::size_t j = 0; j < k; ++j) {
            double* c = res.centroids.data() + j * dim;
            for (std::size_t t = 0; t < dim; ++t) c[t] /= static_cast<double>(counts[j]);
        }

        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += sq_dist(data + i * dim,
                               res.centroids.data() + static_cast<std::size_t>(res.assignment[i]) * dim,
                               dim);

        if (inertia > prev_inertia) {
            // floating-point wobble at convergence; keep the previous state
            res.centroids = prev_centroids;
            res.assignment = prev_assignment;
            break;
        }
        res.inertia_history.push_back(inertia);
        res.iterations = iter + 1;

        double max_shift = 0.0;
        for (std::size_t t = 0; t < k * dim; ++t)
            max_shift = std::max(max_shift, std::abs(res.centroids[t] - prev_centroids[t]));
        prev_inertia = inertia;
        if (max_shift < 1e-6) break;
    }
    res.inertia = prev_inertia;
    return res;
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeding; the best of `restarts` runs wins
/// (per-restart seeds split from the master seed). Requires k distinct
/// vectors.
inline KMeansModel kmeans_fit(const double* data, std::size_t n, std::size_t dim, std::size_t k,
                              int max_iterations = 300, int restarts = 10, std::uint64_t seed = 0) {
    require(n > 0 && dim > 0, "kmeans_fit: empty data");
    require(k >= 1, "kmeans_fit: k must be >= 1");
    require(max_iterations >= 1, "kmeans_fit: need at least one iteration");
    require(restarts >= 1, "kmeans_fit: need at least one restart");
    const std::size_t distinct = detail::count_distinct_rows(data, n, dim);
    require(k <= distinct, "kmeans_fit: k=" + std::to_string(k) + " exceeds the " +
                               std::to_string(distinct) + " distinct vectors");

    detail::LloydResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    std::uint64_t best_seed = 0;
    for (int r = 0; r < restarts; ++r) {
        const std::uint64_t run_seed = mix_seed(seed, static_cast<std::uint64_t>(r));
        auto res = detail::lloyd(data, n, dim, k, max_iterations, run_seed);
        if (res.inertia < best.inertia) {
            best = std::move(res);
            best_seed = run_seed;
        }
    }

    KMeansModel model;
    model.k = k;
    model.dim = dim;
    model.centroids = std::move(best.centroids);
    model.inertia = best.inertia;
    model.iterations = best.iterations;
    model.seed = best_seed;
    model.inertia_history = std::move(best.inertia_history);
    return model;
}

inline std::vector<int> kmeans_assign(const KMeansModel& model, const double* data, std::size_t n) {
    std::vector<int> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] =
            static_cast<int>(detail::nearest_centroid(data + i * model.dim, model.centroids, model.k,
                                                      model.dim));
    return out;
}

// FeatureVector front-ends

inline std::vector<double> to_matrix(const std::vector<features::FeatureVector>& vs,
                                     std::size_t& dim, features::Provenance& prov,
                                     const std::string& where) {
    require(!vs.empty(), where + ": no vectors");
    dim = vs[0].dim();
    prov = vs[0].provenance;
    std::vector<double> data(vs.size() * dim);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        features::require_same_provenance(vs[i].provenance, prov, where);
        require(vs[i].dim() == dim, where + ": dimension mismatch");
        for (std::size_t t = 0; t < dim; ++t) data[i * dim + t] = vs[i].values[t];
    }
    return data;
}

inline KMeansModel kmeans_fit(const std::vector<features::FeatureVector>& vs, std::size_t k,
                              int max_iterations = 300, int restarts = 10, std::uint64_t seed = 0) {
    std::size_t dim = 0;
    features::Provenance prov;
    const auto data = to_matrix(vs, dim, prov, "kmeans_fit");
    auto model = kmeans_fit(data.data(), vs.size(), dim, k, max_iterations, restarts, seed);
    model.source = prov;
    return model;
}

inline std::vector<int> kmeans_assign(const KMeansModel& model,
                                      const std::vector<features::FeatureVector>& vs) {
    std::size_t dim = 0;
    features::Provenance prov;
    const auto data = to_matrix(vs, dim, prov, "kmeans_assign");
    require(dim == model.dim, "kmeans_assign: dimension mismatch");
    return kmeans_assign(model, data.data(), vs.size());
}

// ---------------------------------------------------------------------------
// t-SNE affinities

struct GaussianConditionals {
    std::size_t n = 0;
    std::vector<double> rows;   // n x n, row-stochastic, zero diagonal
    std::vector<double> betas;  // 1/(2 sigma_i^2)
};

/// Per-row Gaussian bandwidths bisected until each conditional's entropy hits
/// log2(perplexity) within 1e-5 bits.
inline GaussianConditionals gaussian_conditionals(const double* data, std::size_t n, std::size_t dim,
                                                  double perplexity) {
    require(n >= 2, "compute_affinities: need at least 2 vectors");
    require(perplexity > 1.0 && perplexity < static_cast<double>(n),
            "compute_affinities: perplexity must lie in (1, N)");

    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = detail::sq_dist(data + i * dim, data + j * dim, dim);
            d2[i * n + j] = d;
            d2[j * n + i] = d;
        }

    GaussianConditionals out;
    out.n = n;
    out.rows.assign(n * n, 0.0);
    out.betas.assign(n, 1.0);
    const double target = std::log2(perplexity);

    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) {
        double min_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) min_d2 = std::min(min_d2, d2[i * n + j]);

        // shifted exponents keep the row numerically stable for any beta
        auto row_for = [&](double beta, double& sum) {
            sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                p[j] = (j == i) ? 0.0 : std::exp(-beta * (d2[i * n + j] - min_d2));
                sum += p[j];
            }
        };

        double beta = 1.0, beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 200; ++it) {
            double sum = 0.0;
            row_for(beta, sum);
            double entropy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (p[j] <= 0.0) continue;
                const double q = p[j] / sum;
                entropy -= q * std::log2(q);
            }
            if (std::abs(entropy - target) < 1e-5) break;
            if (entropy > target) {  // too flat: sharpen
                beta_lo = beta;
                beta = std::isinf(beta_hi) ? beta * 2.0 : (beta + beta_hi) / 2.0;
            } else {
                beta_hi = beta;
                beta = (beta + beta_lo) / 2.0;
            }
        }
        double sum = 0.0;
        row_for(beta, sum);
        for (std::size_t j = 0; j < n; ++j) out.rows[i * n + j] = p[j] / sum;
        out.betas[i] = beta;
    }
    return out;
}

/// Symmetrized affinities P = (P_{j|i} + P_{i|j}) / 2N; total mass 1.
inline std::vector<double> compute_affinities(const double* data, std::size_t n, std::size_t dim,
                                              double perplexity) {
    const auto cond = gaussian_conditionals(data, n, dim, perplexity);
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            p[i * n + j] = (cond.rows[i * n + j] + cond.rows[j * n + i]) / (2.0 * static_cast<double>(n));
    return p;
}

// ---------------------------------------------------------------------------
// t-SNE embedding

struct TsneParams {
    double perplexity = 30.0;
    int epochs = 1000;
    double learning_rate = 200.0;
    double exaggeration = 12.0;  // applied for the first quarter of epochs
    std::uint64_t seed = 0;
};

struct EmbeddingMap {
    std::vector<std::string> ids;
    std::vector<std::array<double, 2>> coords;
    double final_kl = 0.0;
    double kl_after_exaggeration = 0.0;
    double perplexity = 0.0;
    std::uint64_t seed = 0;
    int epochs = 0;
};

namespace detail {

inline double tsne_kl(const std::vector<double>& p, const std::vector<double>& q, std::size_t n) {
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double pij = std::max(p[i * n + j], 1e-12);
            const double qij = std::max(q[i * n + j], 1e-12);
            kl += pij * std::log(pij / qij);
        }
    return kl;
}

}  // namespace detail

/// Gradient descent on KL(P||Q) with the Student-t low-dimensional kernel.
/// Early exaggeration runs for the first quarter of the epochs; momentum is
/// 0.5 during that phase and 0.8 afterwards.
inline EmbeddingMap tsne_embed(const double* data, std::size_t n, std::size_t dim,
                               const TsneParams& params = {}) {
    require(n >= 5, "tsne_embed: need at least 5 vectors");
    require(params.epochs >= 4, "tsne_embed: need at least 4 epochs");
    const auto p_base = compute_affinities(data, n, dim, params.perplexity);
    const int ee_end = params.epochs / 4;

    Rng rng(params.seed);
    std::vector<double> y(n * 2);
    for (auto& v : y) v = rng.normal(0.0, 1e-4);

    std::vector<double> vel(n * 2, 0.0);
    std::vector<double> gain(n * 2, 1.0);
    std::vector<double> q(n * n, 0.0);
    std::vector<double> grad(n * 2, 0.0);

    EmbeddingMap out;
    out.perplexity = params.perplexity;
    out.seed = params.seed;
    out.epochs = params.epochs;

    auto compute_kernel = [&]() {
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[2 * i] - y[2 * j];
                const double dy = y[2 * i + 1] - y[2 * j + 1];
                const double w = 1.0 / (1.0 + dx * dx + dy * dy);
                q[i * n + j] = w;
                q[j * n + i] = w;
                z += 2.0 * w;
            }
        return z;
    };
    auto kl_of_state = [&](double z) {
        std::vector<double> qn(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) qn[i * n + j] = q[i * n + j] / z;
        return detail::tsne_kl(p_base, qn, n);
    };

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        const bool exaggerated = epoch < ee_end;
        const double p_scale = exaggerated ? params.exaggeration : 1.0;
        const double momentum = exaggerated ? 0.5 : 0.8;

        const double z = compute_kernel();
        // KL against the true P of the state the exaggeration phase produced
        if (epoch == ee_end) out.kl_after_exaggeration = kl_of_state(z);

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = q[i * n + j];
                const double qij = std::max(w / z, 1e-12);
                const double mult = 4.0 * (p_scale * p_base[i * n + j] - qij) * w;
                grad[2 * i] += mult * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += mult * (y[2 * i + 1] - y[2 * j + 1]);
            }

        // per-parameter gains damp oscillation so one learning rate serves
        // all problem sizes
        for (std::size_t t = 0; t < n * 2; ++t) {
            const bool same_sign = (grad[t] > 0.0) == (vel[t] > 0.0);
            gain[t] = same_sign ? std::max(gain[t] * 0.8, 0.01) : gain[t] + 0.2;
            vel[t] = momentum * vel[t] - params.learning_rate * gain[t] * grad[t];
            y[t] += vel[t];
        }
        double cx = 0.0, cy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cx += y[2 * i];
            cy += y[2 * i + 1];
        }
        cx /= static_cast<double>(n);
        cy /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[2 * i] -= cx;
            y[2 * i + 1] -= cy;
        }

        for (const auto v : y)
            require(std::isfinite(v),
                    "tsne_embed: diverged to non-finite coordinates at epoch " + std::to_string(epoch));
    }
    out.final_kl = kl_of_state(compute_kernel());

    out.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.coords[i] = {y[2 * i], y[2 * i + 1]};
    return out;
}

inline EmbeddingMap tsne_embed(const std::vector<features::FeatureVector>& vs,
                               const std::vector<std::string>& ids, const TsneParams& params = {}) {
    std::size_t dim = 0;
    features::Provenance prov;
    const auto data = to_matrix(vs, dim, prov, "tsne_embed");
    auto map = tsne_embed(data.data(), vs.size(), dim, params);
    map.ids = ids;
    return map;
}

}  // namespace mct::cluster
