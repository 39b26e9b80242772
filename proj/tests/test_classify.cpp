#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "mct/classify.hpp"
#include "mct/rng.hpp"
#include "test_support.hpp"

using namespace mct;
using namespace mct::classify;

namespace {

const features::Provenance kProv{"bb", "conv4_2", "raw"};

features::FeatureVector fv(std::vector<float> values) { return {std::move(values), kProv}; }

// two separable 2-D blobs
void make_blobs(std::vector<features::FeatureVector>& xs, std::vector<std::string>& ys,
                std::size_t per_class, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < per_class; ++i) {
        xs.push_back(fv({static_cast<float>(rng.normal(-4.0, 0.5)),
                         static_cast<float>(rng.normal(0.0, 0.5))}));
        ys.push_back("alpha");
    }
    for (std::size_t i = 0; i < per_class; ++i) {
        xs.push_back(fv({static_cast<float>(rng.normal(4.0, 0.5)),
                         static_cast<float>(rng.normal(0.0, 0.5))}));
        ys.push_back("beta");
    }
}

// test-side Gaussian elimination with partial pivoting
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b, std::size_t n) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        for (std::size_t t = 0; t < n; ++t) std::swap(a[col * n + t], a[piv * n + t]);
        std::swap(b[col], b[piv]);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / a[col * n + col];
            for (std::size_t t = col; t < n; ++t) a[r * n + t] -= f * a[col * n + t];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t t = ri + 1; t < n; ++t) acc -= a[ri * n + t] * x[t];
        x[ri] = acc / a[ri * n + ri];
    }
    return x;
}

// ridge oracle mirroring the centered formulation
std::vector<double> ridge_oracle(const std::vector<features::FeatureVector>& xs,
                                 const std::vector<double>& ys, double lambda, double& bias) {
    const std::size_t n = xs.size(), d = xs[0].dim();
    std::vector<double> xm(d, 0.0);
    double ym = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < d; ++t) xm[t] += xs[i].values[t];
        ym += ys[i];
    }
    for (auto& m : xm) m /= static_cast<double>(n);
    ym /= static_cast<double>(n);

    std::vector<double> ata(d * d, 0.0), atb(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = xs[i].values[a] - xm[a];
            atb[a] += xa * (ys[i] - ym);
            for (std::size_t b_ = 0; b_ < d; ++b_) ata[a * d + b_] += xa * (xs[i].values[b_] - xm[b_]);
        }
    for (std::size_t t = 0; t < d; ++t) ata[t * d + t] += lambda;
    auto w = solve_linear(ata, atb, d);
    bias = ym;
    for (std::size_t t = 0; t < d; ++t) bias -= xm[t] * w[t];
    return w;
}

}  // namespace

TEST_CASE("evaluate: identity, inversion, arithmetic", "[classify]") {
    SECTION("all correct") {
        const std::vector<std::string> y{"a", "b", "a", "c"};
        const auto rep = evaluate(y, y);
        CHECK(rep.accuracy == 1.0);
        for (std::size_t i = 0; i < rep.labels.size(); ++i)
            for (std::size_t j = 0; j < rep.labels.size(); ++j)
                if (i != j) CHECK(rep.at(i, j) == 0);
        for (const auto p : rep.precision) CHECK(p == 1.0);
        for (const auto r : rep.recall) CHECK(r == 1.0);
    }
    SECTION("binary all-wrong is the anti-diagonal") {
        const auto rep = evaluate({"b", "b", "a", "a"}, {"a", "a", "b", "b"});
        CHECK(rep.accuracy == 0.0);
        CHECK(rep.at(0, 0) == 0);
        CHECK(rep.at(0, 1) == 2);
        CHECK(rep.at(1, 0) == 2);
        CHECK(rep.at(1, 1) == 0);
    }
    SECTION("9 of 10 correct") {
        std::vector<std::string> truth(10, "x"), pred(10, "x");
        truth[3] = "y";
        pred[3] = "x";  // one miss
        truth[7] = "y";
        pred[7] = "y";
        const auto rep = evaluate(pred, truth);
        CHECK(rep.accuracy == Catch::Approx(0.9));
    }
    SECTION("accuracy equals trace over total on random cases") {
        Rng rng(12);
        const std::vector<std::string> names{"a", "b", "c", "d"};
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<std::string> truth, pred;
            for (int i = 0; i < 40; ++i) {
                truth.push_back(names[rng.index(4)]);
                pred.push_back(names[rng.index(4)]);
            }
            const auto rep = evaluate(pred, truth);
            std::int64_t trace = 0, total = 0;
            for (std::size_t i = 0; i < rep.labels.size(); ++i) {
                trace += rep.at(i, i);
                for (std::size_t j = 0; j < rep.labels.size(); ++j) total += rep.at(i, j);
            }
            REQUIRE(rep.accuracy == Catch::Approx(static_cast<double>(trace) / total));
            // row sums equal true-class supports
            for (std::size_t i = 0; i < rep.labels.size(); ++i) {
                std::int64_t row = 0, support = 0;
                for (std::size_t j = 0; j < rep.labels.size(); ++j) row += rep.at(i, j);
                for (const auto& t : truth)
                    if (t == rep.labels[i]) ++support;
                REQUIRE(row == support);
            }
        }
    }
    SECTION("0/0 precision is 1 for a never-predicted class") {
        const auto rep = evaluate({"a", "a", "a"}, {"a", "a", "b"});
        const std::size_t b_idx = 1;
        CHECK(rep.labels[b_idx] == "b");
        CHECK(rep.precision[b_idx] == 1.0);  // no b predictions
        CHECK(rep.recall[b_idx] == 0.0);
    }
    SECTION("length mismatch") {
        CHECK_THROWS_WITH(evaluate({"a"}, {"a", "b"}),
                          Catch::Matchers::ContainsSubstring("length mismatch"));
    }
}

TEST_CASE("svm separates linear blobs perfectly", "[classify]") {
    std::vector<features::FeatureVector> xs;
    std::vector<std::string> ys;
    make_blobs(xs, ys, 20, 3);

    const auto clf = train_svm(xs, ys, {.c_reg = 10.0, .max_epochs = 300, .seed = 1});
    CHECK(clf.training_accuracy == 1.0);
    CHECK(clf.labels == std::vector<std::string>{"alpha", "beta"});

    SECTION("training points predict their own labels") {
        const auto pred = predict(clf, xs);
        for (std::size_t i = 0; i < xs.size(); ++i) REQUIRE(pred.labels[i] == ys[i]);
    }
    SECTION("hinge objective is non-increasing at every epoch") {
        for (const auto& history : clf.objective_history) {
            REQUIRE(history.size() >= 2);
            for (std::size_t i = 1; i < history.size(); ++i)
                REQUIRE(history[i] <= history[i - 1]);
        }
    }
    SECTION("deterministic for a fixed seed") {
        const auto again = train_svm(xs, ys, {.c_reg = 10.0, .max_epochs = 300, .seed = 1});
        CHECK(again.weights == clf.weights);
        CHECK(again.biases == clf.biases);
    }
}

TEST_CASE("svm preconditions", "[classify]") {
    std::vector<features::FeatureVector> xs = {fv({1, 2}), fv({3, 4}), fv({5, 6}), fv({7, 8})};
    SECTION("single class") {
        CHECK_THROWS_WITH(train_svm(xs, {"a", "a", "a", "a"}, {}),
                          Catch::Matchers::ContainsSubstring("at least 2 classes"));
    }
    SECTION("class with one sample") {
        CHECK_THROWS_WITH(train_svm(xs, {"a", "a", "a", "b"}, {}),
                          Catch::Matchers::ContainsSubstring("fewer than 2 samples"));
    }
}

TEST_CASE("svm scores equal a dot-product oracle and scale invariance holds", "[classify]") {
    std::vector<features::FeatureVector> xs;
    std::vector<std::string> ys;
    make_blobs(xs, ys, 10, 9);
    const auto clf = train_svm(xs, ys, {.c_reg = 1.0, .max_epochs = 200, .seed = 2});

    SECTION("scores recomputed independently within 1e-9") {
        const auto pred = predict(clf, xs);
        for (std::size_t i = 0; i < xs.size(); ++i)
            for (std::size_t c = 0; c < clf.labels.size(); ++c) {
                double want = clf.biases[c];
                for (std::size_t t = 0; t < clf.dim; ++t)
                    want += clf.weight(c)[t] * static_cast<double>(xs[i].values[t]);
                REQUIRE(pred.scores[i][c] == Catch::Approx(want).margin(1e-9));
            }
    }
    SECTION("scaling inputs and weights by c > 0 keeps the argmax") {
        LinearClassifier scaled = clf;
        const double c = 3.5;
        for (auto& w : scaled.weights) w *= c;
        for (auto& b : scaled.biases) b *= c * c;
        std::vector<features::FeatureVector> sx = xs;
        for (auto& v : sx)
            for (auto& x : v.values) x *= static_cast<float>(c);
        const auto base = predict(clf, xs);
        const auto two = predict(scaled, sx);
        for (std::size_t i = 0; i < xs.size(); ++i) REQUIRE(base.labels[i] == two.labels[i]);
    }
}

TEST_CASE("ridge regression solves exactly and matches the normal equations", "[classify]") {
    Rng rng(31);

    SECTION("exact linear targets interpolate at lambda 0") {
        std::vector<features::FeatureVector> xs;
        std::vector<double> ys;
        const double w_true[3] = {1.5, -2.0, 0.5};
        for (int i = 0; i < 30; ++i) {
            std::vector<float> v{static_cast<float>(rng.normal()), static_cast<float>(rng.normal()),
                                 static_cast<float>(rng.normal())};
            ys.push_back(w_true[0] * v[0] + w_true[1] * v[1] + w_true[2] * v[2] + 0.7);
            xs.push_back(fv(v));
        }
        const auto reg = train_regressor(xs, ys, 0.0);
        for (std::size_t i = 0; i < xs.size(); ++i)
            REQUIRE(std::abs(predict_value(reg, xs[i]) - ys[i]) < 1e-8);
    }
    SECTION("constant targets predict the constant anywhere") {
        std::vector<features::FeatureVector> xs;
        std::vector<double> ys;
        for (int i = 0; i < 12; ++i) {
            xs.push_back(fv({static_cast<float>(rng.normal()), static_cast<float>(rng.normal())}));
            ys.push_back(4.25);
        }
        const auto reg = train_regressor(xs, ys, 0.5);
        CHECK(predict_value(reg, fv({100.f, -50.f})) == Catch::Approx(4.25).margin(1e-9));
    }
    SECTION("random well-conditioned system matches the solve oracle") {
        std::vector<features::FeatureVector> xs;
        std::vector<double> ys;
        for (int i = 0; i < 40; ++i) {
            std::vector<float> v(5);
            for (auto& x : v) x = static_cast<float>(rng.normal());
            xs.push_back(fv(v));
            ys.push_back(rng.normal());
        }
        const double lambda = 0.3;
        const auto reg = train_regressor(xs, ys, lambda);
        double bias_want = 0.0;
        const auto w_want = ridge_oracle(xs, ys, lambda, bias_want);
        for (std::size_t t = 0; t < 5; ++t)
            REQUIRE(reg.weights[t] == Catch::Approx(w_want[t]).epsilon(1e-6).margin(1e-10));
        REQUIRE(reg.bias == Catch::Approx(bias_want).epsilon(1e-6).margin(1e-10));
    }
    SECTION("dual route (D > N) agrees with the normal equations") {
        std::vector<features::FeatureVector> xs;
        std::vector<double> ys;
        for (int i = 0; i < 6; ++i) {
            std::vector<float> v(9);
            for (auto& x : v) x = static_cast<float>(rng.normal());
            xs.push_back(fv(v));
            ys.push_back(rng.normal());
        }
        const double lambda = 0.8;
        const auto reg = train_regressor(xs, ys, lambda);
        double bias_want = 0.0;
        const auto w_want = ridge_oracle(xs, ys, lambda, bias_want);
        for (std::size_t t = 0; t < 9; ++t)
            REQUIRE(reg.weights[t] == Catch::Approx(w_want[t]).epsilon(1e-8).margin(1e-10));
    }
    SECTION("weight norm shrinks monotonically with lambda") {
        std::vector<features::FeatureVector> xs;
        std::vector<double> ys;
        for (int i = 0; i < 25; ++i) {
            std::vector<float> v(4);
            for (auto& x : v) x = static_cast<float>(rng.normal());
            xs.push_back(fv(v));
            ys.push_back(rng.normal());
        }
        double prev = std::numeric_limits<double>::infinity();
        for (const double lambda : {0.1, 10.0, 1000.0}) {
            const auto reg = train_regressor(xs, ys, lambda);
            double norm = 0.0;
            for (const auto w : reg.weights) norm += w * w;
            REQUIRE(norm < prev);
            prev = norm;
        }
    }
    SECTION("log transform inverts on prediction and rejects bad targets") {
        std::vector<features::FeatureVector> xs;
        std::vector<double> ys;
        for (int i = 0; i < 20; ++i) {
            const float t = static_cast<float>(rng.normal());
            xs.push_back(fv({t}));
            ys.push_back(std::exp(0.5 * t + 1.0));
        }
        const auto reg = train_regressor(xs, ys, 0.0, "log");
        for (std::size_t i = 0; i < xs.size(); ++i)
            REQUIRE(predict_value(reg, xs[i]) == Catch::Approx(ys[i]).epsilon(1e-6));

        ys[3] = -1.0;
        CHECK_THROWS_WITH(train_regressor(xs, ys, 0.0, "log"),
                          Catch::Matchers::ContainsSubstring("positive targets"));
    }
    SECTION("rank-deficient lambda-0 system is rejected") {
        std::vector<features::FeatureVector> xs;
        std::vector<double> ys;
        for (int i = 0; i < 10; ++i) {
            const float t = static_cast<float>(i);
            xs.push_back(fv({t, 2 * t}));  // collinear columns
            ys.push_back(t);
        }
        CHECK_THROWS_WITH(train_regressor(xs, ys, 0.0),
                          Catch::Matchers::ContainsSubstring("rank-deficient"));
    }
}

TEST_CASE("cross-validation folds and determinism", "[classify]") {
    std::vector<features::FeatureVector> xs;
    std::vector<std::string> ys;
    make_blobs(xs, ys, 15, 17);  // 30 samples

    SECTION("stratified assignment: sizes differ by at most one, classes balanced") {
        const auto assignment = stratified_folds(ys, 4, 5);
        std::map<int, int> sizes;
        std::map<std::pair<int, std::string>, int> per_class;
        for (std::size_t i = 0; i < ys.size(); ++i) {
            sizes[assignment[i]]++;
            per_class[{assignment[i], ys[i]}]++;
        }
        int lo = 1 << 30, hi = 0;
        for (const auto& [fold, size] : sizes) {
            lo = std::min(lo, size);
            hi = std::max(hi, size);
        }
        CHECK(hi - lo <= 1);
        for (const auto& [key, count] : per_class) CHECK(count >= 3);  // 15 over 4 folds
    }
    SECTION("same seed gives identical assignments") {
        CHECK(stratified_folds(ys, 5, 9) == stratified_folds(ys, 5, 9));
        CHECK(shuffled_folds(30, 5, 9) == shuffled_folds(30, 5, 9));
    }
    SECTION("leave-one-out yields one report per sample") {
        std::vector<features::FeatureVector> xs10(xs.begin(), xs.begin() + 5);
        std::vector<std::string> ys10(ys.begin(), ys.begin() + 5);
        xs10.insert(xs10.end(), xs.begin() + 15, xs.begin() + 20);
        ys10.insert(ys10.end(), ys.begin() + 15, ys.begin() + 20);
        const auto cv = cross_validate_classifier(xs10, ys10, 10, 3, {.max_epochs = 100});
        CHECK(cv.folds.size() == 10);
    }
    SECTION("separable blobs cross-validate perfectly") {
        const auto cv = cross_validate_classifier(xs, ys, 5, 11, {.c_reg = 10.0, .max_epochs = 200});
        CHECK(cv.mean_accuracy == Catch::Approx(1.0));
    }
    SECTION("regression cross-validation reports per-fold errors") {
        std::vector<double> targets;
        for (const auto& v : xs) targets.push_back(2.0 * v.values[0] + 5.0 + 0.01 * v.values[1]);
        const auto cv = cross_validate_regressor(xs, targets, 5, 2, 1e-6);
        CHECK(cv.folds.size() == 5);
        for (const auto& fold : cv.folds) CHECK(fold.count == 6);
    }
    SECTION("folds out of range") {
        CHECK_THROWS_WITH(cross_validate_classifier(xs, ys, 1, 0, {}),
                          Catch::Matchers::ContainsSubstring("folds out of range"));
        CHECK_THROWS_WITH(cross_validate_classifier(xs, ys, 31, 0, {}),
                          Catch::Matchers::ContainsSubstring("folds out of range"));
    }
}

TEST_CASE("classifier and regressor serialization round-trip", "[classify]") {
    testsup::TempDir dir("clf");
    std::vector<features::FeatureVector> xs;
    std::vector<std::string> ys;
    make_blobs(xs, ys, 8, 23);

    const auto clf = train_svm(xs, ys, {.c_reg = 2.0, .max_epochs = 150, .seed = 4});
    save_classifier(clf, dir.str("svm"));
    const auto clf2 = load_classifier(dir.str("svm"));
    CHECK(clf2.labels == clf.labels);
    CHECK(clf2.c_reg == clf.c_reg);
    const auto p1 = predict(clf, xs);
    const auto p2 = predict(clf2, xs);
    CHECK(p1.labels == p2.labels);

    std::vector<double> targets;
    for (const auto& v : xs) targets.push_back(1.0 + 0.5 * v.values[0]);
    const auto reg = train_regressor(xs, targets, 0.01);
    save_regressor(reg, dir.str("ridge"));
    const auto reg2 = load_regressor(dir.str("ridge"));
    CHECK(reg2.transform == "identity");
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(predict_value(reg2, xs[i]) == Catch::Approx(predict_value(reg, xs[i])).margin(1e-4));

    SECTION("relative rmse helper") {
        CHECK(relative_rmse({110.0, 90.0}, {100.0, 100.0}) == Catch::Approx(0.1));
    }
}
