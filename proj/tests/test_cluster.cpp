#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "mct/cluster.hpp"
#include "mct/rng.hpp"

using namespace mct;
using namespace mct::cluster;

namespace {

const features::Provenance kProv{"bb", "conv4_2", "raw"};

features::FeatureVector fv(std::vector<float> values) { return {std::move(values), kProv}; }

dataio::FeatureStore random_store(std::size_t n, std::size_t dim, std::uint64_t seed) {
    dataio::FeatureStore store("bb", "conv4_2", "raw", dim);
    Rng rng(seed);
    char name[32];
    for (std::size_t i = 0; i < n; ++i) {
        std::snprintf(name, sizeof(name), "rec-%04zu", i);
        std::vector<float> v(dim);
        for (auto& x : v) x = static_cast<float>(rng.normal());
        store.add(name, v);
    }
    return store;
}

std::vector<std::pair<std::string, double>> exhaustive_knn(const features::FeatureVector& q,
                                                           const dataio::FeatureStore& store,
                                                           std::size_t k) {
    std::vector<std::pair<double, std::string>> all;
    for (std::size_t i = 0; i < store.size(); ++i) {
        double acc = 0.0;
        const float* r = store.record(i);
        for (std::size_t t = 0; t < store.dim(); ++t) {
            const double d = static_cast<double>(q.values[t]) - r[t];
            acc += d * d;
        }
        all.emplace_back(std::sqrt(acc), store.ids()[i]);
    }
    std::sort(all.begin(), all.end());
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < k; ++i) out.emplace_back(all[i].second, all[i].first);
    return out;
}

}  // namespace

TEST_CASE("l2 distance basics", "[cluster]") {
    CHECK(l2_distance(fv({3, 4}), fv({0, 0})) == Catch::Approx(5.0));
    const auto a = fv({1.5f, -2.f, 0.25f});
    CHECK(l2_distance(a, a) == 0.0);

    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
        std::vector<float> x(5), y(5);
        for (auto& v : x) v = static_cast<float>(rng.normal());
        for (auto& v : y) v = static_cast<float>(rng.normal());
        CHECK(l2_distance(fv(x), fv(y)) == l2_distance(fv(y), fv(x)));
    }

    CHECK_THROWS_WITH(l2_distance(fv({1, 2}), fv({1, 2, 3})),
                      Catch::Matchers::ContainsSubstring("dimension"));
    auto alien = fv({1, 2});
    alien.provenance.layer = "conv1_1";
    CHECK_THROWS_WITH(l2_distance(fv({1, 2}), alien),
                      Catch::Matchers::ContainsSubstring("provenance"));
}

TEST_CASE("knn self-retrieval and full ranking", "[cluster]") {
    const auto store = random_store(40, 8, 3);
    const auto query = store.vector(std::size_t{17});

    SECTION("query present in store ranks itself first at distance 0") {
        const auto nl = knn_search(query, store, 3, "rec-0017");
        REQUIRE(nl.neighbors.size() == 3);
        CHECK(nl.neighbors[0].first == "rec-0017");
        CHECK(nl.neighbors[0].second == 0.0);
    }
    SECTION("k = store size gives a full non-decreasing ranking") {
        const auto nl = knn_search(query, store, store.size());
        REQUIRE(nl.neighbors.size() == store.size());
        for (std::size_t i = 1; i < nl.neighbors.size(); ++i)
            CHECK(nl.neighbors[i].second >= nl.neighbors[i - 1].second);
        std::set<std::string> ids;
        for (const auto& [id, d] : nl.neighbors) ids.insert(id);
        CHECK(ids.size() == store.size());  // no duplicates
    }
    SECTION("ties break by record id") {
        dataio::FeatureStore dup("bb", "conv4_2", "raw", 2);
        dup.add("zz", {1.f, 1.f});
        dup.add("aa", {1.f, 1.f});
        dup.add("mm", {5.f, 5.f});
        const auto nl = knn_search(fv({1, 1}), dup, 2);
        CHECK(nl.neighbors[0].first == "aa");
        CHECK(nl.neighbors[1].first == "zz");
    }
    SECTION("errors") {
        CHECK_THROWS_WITH(knn_search(query, store, 41), Catch::Matchers::ContainsSubstring("k exceeds"));
        dataio::FeatureStore empty("bb", "conv4_2", "raw", 8);
        CHECK_THROWS_WITH(knn_search(query, empty, 1), Catch::Matchers::ContainsSubstring("empty"));
        auto alien = query;
        alien.provenance.encoding = "pca-4";
        CHECK_THROWS_WITH(knn_search(alien, store, 1),
                          Catch::Matchers::ContainsSubstring("provenance"));
    }
}

TEST_CASE("knn equals the exhaustive-sort oracle on random stores", "[cluster]") {
    Rng sizes(99);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 5 + sizes.index(295);
        const auto store = random_store(n, 6, 1000 + static_cast<std::uint64_t>(trial));
        std::vector<float> q(6);
        for (auto& x : q) x = static_cast<float>(sizes.normal());
        const auto query = fv(q);
        const std::size_t k = 1 + sizes.index(std::min<std::size_t>(n, 10));

        const auto got = knn_search(query, store, k);
        const auto want = exhaustive_knn(query, store, k);
        REQUIRE(got.neighbors.size() == want.size());
        for (std::size_t i = 0; i < k; ++i) {
            CHECK(got.neighbors[i].first == want[i].first);
            CHECK(got.neighbors[i].second == Catch::Approx(want[i].second).margin(1e-12));
        }
    }
}

TEST_CASE("kmeans degenerate fits", "[cluster]") {
    SECTION("k equal to the number of distinct points gives zero inertia") {
        std::vector<features::FeatureVector> vs;
        for (int i = 0; i < 6; ++i)
            vs.push_back(fv({static_cast<float>(i), static_cast<float>(i * i)}));
        const auto model = kmeans_fit(vs, 6, 50, 3, 7);
        CHECK(model.inertia == Catch::Approx(0.0).margin(1e-18));
        std::set<std::pair<double, double>> centroid_set, point_set;
        for (std::size_t j = 0; j < 6; ++j)
            centroid_set.insert({model.centroid(j)[0], model.centroid(j)[1]});
        for (const auto& v : vs) point_set.insert({v.values[0], v.values[1]});
        CHECK(centroid_set == point_set);
    }
    SECTION("k=1 gives the mean and total variance") {
        Rng rng(5);
        std::vector<features::FeatureVector> vs;
        double sx = 0, sy = 0;
        for (int i = 0; i < 25; ++i) {
            const float x = static_cast<float>(rng.normal()), y = static_cast<float>(rng.normal());
            vs.push_back(fv({x, y}));
            sx += x;
            sy += y;
        }
        const auto model = kmeans_fit(vs, 1, 50, 2, 1);
        CHECK(model.centroid(0)[0] == Catch::Approx(sx / 25));
        CHECK(model.centroid(0)[1] == Catch::Approx(sy / 25));
        double want = 0.0;
        for (const auto& v : vs) {
            const double dx = v.values[0] - sx / 25, dy = v.values[1] - sy / 25;
            want += dx * dx + dy * dy;
        }
        CHECK(model.inertia == Catch::Approx(want).epsilon(1e-9));
    }
    SECTION("k above the distinct count is rejected") {
        std::vector<features::FeatureVector> vs = {fv({1, 1}), fv({1, 1}), fv({2, 2})};
        CHECK_THROWS_WITH(kmeans_fit(vs, 3, 10, 1, 0),
                          Catch::Matchers::ContainsSubstring("distinct"));
    }
}

TEST_CASE("kmeans separates blobs and matches the exhaustive 2-partition", "[cluster]") {
    Rng rng(11);
    std::vector<features::FeatureVector> vs;
    std::vector<int> truth;
    for (int i = 0; i < 6; ++i) {
        vs.push_back(fv({static_cast<float>(rng.normal(0.0, 1.0)),
                         static_cast<float>(rng.normal(0.0, 1.0))}));
        truth.push_back(0);
    }
    for (int i = 0; i < 6; ++i) {
        vs.push_back(fv({static_cast<float>(rng.normal(10.0, 1.0)),
                         static_cast<float>(rng.normal(10.0, 1.0))}));
        truth.push_back(1);
    }

    const auto model = kmeans_fit(vs, 2, 100, 10, 21);
    const auto assign = kmeans_assign(model, vs);
    for (std::size_t i = 1; i < vs.size(); ++i)
        CHECK((assign[i] == assign[0]) == (truth[i] == truth[0]));

    // oracle: exhaustive best 2-partition inertia over all 2^12 assignments
    double best = 1e300;
    for (unsigned mask = 1; mask < (1u << 12) - 1; ++mask) {
        double cx[2] = {0, 0}, cy[2] = {0, 0};
        int cnt[2] = {0, 0};
        for (int i = 0; i < 12; ++i) {
            const int g = (mask >> i) & 1;
            cx[g] += vs[static_cast<std::size_t>(i)].values[0];
            cy[g] += vs[static_cast<std::size_t>(i)].values[1];
            cnt[g]++;
        }
        if (!cnt[0] || !cnt[1]) continue;
        for (int g = 0; g < 2; ++g) {
            cx[g] /= cnt[g];
            cy[g] /= cnt[g];
        }
        double inertia = 0.0;
        for (int i = 0; i < 12; ++i) {
            const int g = (mask >> i) & 1;
            const double dx = vs[static_cast<std::size_t>(i)].values[0] - cx[g];
            const double dy = vs[static_cast<std::size_t>(i)].values[1] - cy[g];
            inertia += dx * dx + dy * dy;
        }
        best = std::min(best, inertia);
    }
    CHECK(model.inertia == Catch::Approx(best).margin(1e-9));
}

TEST_CASE("lloyd inertia is non-increasing on every run", "[cluster]") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(seed + 400);
        const std::size_t n = 30 + rng.index(40);
        std::vector<double> data(n * 3);
        for (auto& x : data) x = rng.normal();
        const auto model = kmeans_fit(data.data(), n, 3, 4, 100, 1, seed);
        REQUIRE(!model.inertia_history.empty());
        for (std::size_t i = 1; i < model.inertia_history.size(); ++i)
            REQUIRE(model.inertia_history[i] <= model.inertia_history[i - 1]);
    }
}

TEST_CASE("kmeans determinism and scale equivariance", "[cluster]") {
    Rng rng(9);
    std::vector<features::FeatureVector> vs, scaled;
    for (int i = 0; i < 30; ++i) {
        std::vector<float> v{static_cast<float>(rng.normal()), static_cast<float>(rng.normal()),
                             static_cast<float>(rng.normal())};
        std::vector<float> v2{2 * v[0], 2 * v[1], 2 * v[2]};  // exact in binary
        vs.push_back(fv(v));
        scaled.push_back(fv(v2));
    }
    const auto a = kmeans_fit(vs, 3, 100, 5, 77);
    const auto b = kmeans_fit(vs, 3, 100, 5, 77);
    CHECK(a.centroids == b.centroids);
    CHECK(a.inertia == b.inertia);

    const auto s = kmeans_fit(scaled, 3, 100, 5, 77);
    CHECK(kmeans_assign(s, scaled) == kmeans_assign(a, vs));
    for (std::size_t t = 0; t < a.centroids.size(); ++t)
        CHECK(s.centroids[t] == Catch::Approx(2.0 * a.centroids[t]).margin(1e-12));
}

TEST_CASE("affinities: simplex symmetry and entropy calibration", "[cluster]") {
    SECTION("regular simplex gives equal off-diagonal affinities") {
        // 4 vertices of a regular 3-simplex
        const std::vector<double> pts = {1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1};
        const auto p = compute_affinities(pts.data(), 4, 3, 2.5);
        const double ref = p[1];
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                if (i == j)
                    CHECK(p[i * 4 + j] == 0.0);
                else
                    CHECK(p[i * 4 + j] == Catch::Approx(ref).margin(1e-12));
            }
    }
    SECTION("every conditional row hits the target entropy") {
        Rng rng(6);
        std::vector<double> data(50 * 8);
        for (auto& x : data) x = rng.normal();
        const double perplexity = 12.0;
        const auto cond = gaussian_conditionals(data.data(), 50, 8, perplexity);
        for (std::size_t i = 0; i < 50; ++i) {
            double h = 0.0;
            for (std::size_t j = 0; j < 50; ++j) {
                const double q = cond.rows[i * 50 + j];
                if (q > 0) h -= q * std::log2(q);
            }
            REQUIRE(h == Catch::Approx(std::log2(perplexity)).margin(1e-5));
        }
    }
    SECTION("symmetry, positivity, and unit mass") {
        Rng rng(8);
        std::vector<double> data(30 * 4);
        for (auto& x : data) x = rng.normal();
        const auto p = compute_affinities(data.data(), 30, 4, 7.0);
        double total = 0.0;
        for (std::size_t i = 0; i < 30; ++i)
            for (std::size_t j = 0; j < 30; ++j) {
                REQUIRE(p[i * 30 + j] >= 0.0);
                REQUIRE(std::abs(p[i * 30 + j] - p[j * 30 + i]) < 1e-12);
                total += p[i * 30 + j];
            }
        CHECK(total == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("perplexity out of range") {
        std::vector<double> data(10 * 2, 0.5);
        CHECK_THROWS(compute_affinities(data.data(), 10, 2, 0.5));
        CHECK_THROWS(compute_affinities(data.data(), 10, 2, 10.0));
    }
}

TEST_CASE("affinities match an independently bisected dense oracle", "[cluster]") {
    Rng rng(15);
    const std::size_t n = 50, dim = 8;
    std::vector<double> data(n * dim);
    for (auto& x : data) x = rng.normal();
    const double perplexity = 9.0;
    const auto got = compute_affinities(data.data(), n, dim, perplexity);

    // oracle: full recomputation with its own bisection
    std::vector<double> cond(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto entropy_for = [&](double beta) {
            double sum = 0.0;
            std::vector<double> p(n, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double d2 = 0.0;
                for (std::size_t t = 0; t < dim; ++t) {
                    const double diff = data[i * dim + t] - data[j * dim + t];
                    d2 += diff * diff;
                }
                p[j] = std::exp(-beta * d2);
                sum += p[j];
            }
            double h = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (p[j] <= 0) continue;
                const double q = p[j] / sum;
                h -= q * std::log2(q);
            }
            for (std::size_t j = 0; j < n; ++j) cond[i * n + j] = p[j] / sum;
            return h;
        };
        double lo = 1e-12, hi = 1e6;
        for (int it = 0; it < 300; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (entropy_for(mid) > std::log2(perplexity))
                lo = mid;
            else
                hi = mid;
        }
        entropy_for(0.5 * (lo + hi));
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double want = (cond[i * n + j] + cond[j * n + i]) / (2.0 * n);
            REQUIRE(got[i * n + j] == Catch::Approx(want).margin(1e-7));
        }
}

TEST_CASE("tsne embeds deterministically and compresses KL after exaggeration", "[cluster]") {
    Rng rng(44);
    const std::size_t n = 30, dim = 5;
    std::vector<double> data(n * dim);
    for (auto& x : data) x = rng.normal();

    TsneParams params;
    params.perplexity = 8.0;
    params.epochs = 300;
    params.seed = 5;

    const auto a = tsne_embed(data.data(), n, dim, params);
    REQUIRE(a.coords.size() == n);
    for (const auto& c : a.coords) {
        REQUIRE(std::isfinite(c[0]));
        REQUIRE(std::isfinite(c[1]));
    }
    CHECK(a.final_kl < a.kl_after_exaggeration);

    const auto b = tsne_embed(data.data(), n, dim, params);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(a.coords[i][0] == b.coords[i][0]);
        CHECK(a.coords[i][1] == b.coords[i][1]);
    }
}

TEST_CASE("tsne separates well-separated blobs", "[cluster]") {
    Rng rng(70);
    const std::size_t per = 15;
    std::vector<double> data;
    std::vector<int> labels;
    const double centers[3][10] = {{0}, {20, 20, 20, 20, 20, 20, 20, 20, 20, 20},
                                   {-20, 20, -20, 20, -20, 20, -20, 20, -20, 20}};
    for (int blob = 0; blob < 3; ++blob)
        for (std::size_t i = 0; i < per; ++i) {
            for (int t = 0; t < 10; ++t) data.push_back(centers[blob][t] + rng.normal());
            labels.push_back(blob);
        }

    TsneParams params;
    params.perplexity = 10.0;
    params.epochs = 500;
    params.seed = 3;
    const auto map = tsne_embed(data.data(), 3 * per, 10, params);

    double cx[3] = {0, 0, 0}, cy[3] = {0, 0, 0};
    for (std::size_t i = 0; i < map.coords.size(); ++i) {
        cx[labels[i]] += map.coords[i][0] / per;
        cy[labels[i]] += map.coords[i][1] / per;
    }
    double intra = 0.0;
    for (std::size_t i = 0; i < map.coords.size(); ++i) {
        const double dx = map.coords[i][0] - cx[labels[i]];
        const double dy = map.coords[i][1] - cy[labels[i]];
        intra += std::sqrt(dx * dx + dy * dy) / static_cast<double>(map.coords.size());
    }
    double inter = 0.0;
    int pairs = 0;
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) {
            inter += std::sqrt((cx[a] - cx[b]) * (cx[a] - cx[b]) + (cy[a] - cy[b]) * (cy[a] - cy[b]));
            ++pairs;
        }
    inter /= pairs;
    CHECK(inter / intra >= 3.0);
}

TEST_CASE("tsne preconditions", "[cluster]") {
    std::vector<double> data(4 * 2, 0.0);
    TsneParams params;
    params.perplexity = 2.0;
    CHECK_THROWS_WITH(tsne_embed(data.data(), 4, 2, params),
                      Catch::Matchers::ContainsSubstring("at least 5"));
}
