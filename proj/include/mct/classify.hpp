#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mct/cluster.hpp"
#include "mct/common.hpp"
#include "mct/feature_vector.hpp"
#include "mct/rng.hpp"

namespace mct::classify {

// ---------------------------------------------------------------------------
// evaluation

/// Confusion-matrix report; rows are true classes, columns predictions.
/// 0/0 precision or recall is defined as 1 (vacuous truth).
struct EvalReport {
    std::vector<std::string> labels;
    std::vector<std::int64_t> confusion;  // labels.size()^2, row-major
    double accuracy = 0.0;
    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t total = 0;

    std::int64_t at(std::size_t true_c, std::size_t pred_c) const {
        return confusion[true_c * labels.size() + pred_c];
    }
};

inline EvalReport evaluate(const std::vector<std::string>& predicted,
                           const std::vector<std::string>& truth) {
    require(predicted.size() == truth.size(), "evaluate: prediction/truth length mismatch");
    require(!truth.empty(), "evaluate: empty label lists");

    EvalReport rep;
    std::set<std::string> label_set(truth.begin(), truth.end());
    label_set.insert(predicted.begin(), predicted.end());
    rep.labels.assign(label_set.begin(), label_set.end());
    const std::size_t c = rep.labels.size();
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < c; ++i) index[rep.labels[i]] = i;

    rep.confusion.assign(c * c, 0);
    rep.total = truth.size();
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto t = index[truth[i]], p = index[predicted[i]];
        rep.confusion[t * c + p]++;
        if (t == p) ++correct;
    }
    rep.accuracy = static_cast<double>(correct) / static_cast<double>(rep.total);

    rep.precision.assign(c, 1.0);
    rep.recall.assign(c, 1.0);
    for (std::size_t j = 0; j < c; ++j) {
        std::int64_t col = 0, row = 0;
        for (std::size_t i = 0; i < c; ++i) {
            col += rep.confusion[i * c + j];
            row += rep.confusion[j * c + i];
        }
        if (col > 0) rep.precision[j] = static_cast<double>(rep.confusion[j * c + j]) / col;
        if (row > 0) rep.recall[j] = static_cast<double>(rep.confusion[j * c + j]) / row;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// linear max-margin classifier (one-vs-rest, L2-regularized hinge)

struct LinearClassifier {
    std::vector<std::string> labels;
    std::size_t dim = 0;
    std::vector<double> weights;  // labels.size() x dim
    std::vector<double> biases;
    double c_reg = 1.0;
    std::uint64_t seed = 0;
    int epochs = 0;
    double training_accuracy = 0.0;
    std::vector<std::vector<double>> objective_history;  // per one-vs-rest problem
    features::Provenance source;

    // optional input standardization, stored with the model
    bool standardized = false;
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;

    const double* weight(std::size_t c) const { return weights.data() + c * dim; }
};

struct SvmOptions {
    double c_reg = 1.0;
    int max_epochs = 300;
    std::uint64_t seed = 0;
    bool standardize = false;
};

namespace detail {

/// Full-batch subgradient descent with a backtracking line search; a step is
/// taken only when it lowers the objective, so the recorded objective is
/// non-increasing by construction.
inline std::vector<double> train_binary_hinge(const Eigen::MatrixXd& x,
                                              const Eigen::VectorXd& y, double c_reg,
                                              int max_epochs, Eigen::VectorXd& w, double& b) {
    const auto n = x.rows();
    const auto dims = x.cols();
    const double reg_scale = 1.0 / (2.0 * c_reg * static_cast<double>(n));

    w = Eigen::VectorXd::Zero(dims);
    b = 0.0;
    Eigen::VectorXd margins = Eigen::VectorXd::Zero(n);  // y_i (w.x_i + b)
    double norm_w2 = 0.0;

    auto hinge_mean = [&](const Eigen::VectorXd& m) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) acc += std::max(0.0, 1.0 - m(i));
        return acc / static_cast<double>(n);
    };

    double objective = reg_scale * norm_w2 + hinge_mean(margins);
    std::vector<double> history{objective};
    double step = 1.0;

    Eigen::VectorXd active(n), grad_w(dims), dir_w(dims), dm(n), trial_m(n);
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
        for (Eigen::Index i = 0; i < n; ++i) active(i) = margins(i) < 1.0 ? y(i) : 0.0;
        grad_w.noalias() = x.transpose() * active;
        grad_w = w / (c_reg * static_cast<double>(n)) - grad_w / static_cast<double>(n);
        const double grad_b = -active.sum() / static_cast<double>(n);

        dir_w = -grad_w;
        const double dir_b = -grad_b;
        dm.noalias() = x * dir_w;
        for (Eigen::Index i = 0; i < n; ++i) dm(i) = y(i) * (dm(i) + dir_b);

        const double w_dot_d = w.dot(dir_w);
        const double d_dot_d = dir_w.squaredNorm();

        double t = std::min(step * 2.0, 1e8);
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            trial_m = margins + t * dm;
            const double trial_norm = norm_w2 + 2.0 * t * w_dot_d + t * t * d_dot_d;
            const double trial_obj = reg_scale * trial_norm + hinge_mean(trial_m);
            if (trial_obj < objective - 1e-15) {
                w += t * dir_w;
                b += t * dir_b;
                margins = trial_m;
                norm_w2 = trial_norm;
                const double improvement = objective - trial_obj;
                objective = trial_obj;
                history.push_back(objective);
                step = t;
                accepted = true;
                if (improvement < 1e-12 * std::max(1.0, objective)) return history;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // no descent step available: converged
    }
    return history;
}

}  // namespace detail

inline LinearClassifier train_svm_raw(const float* data, std::size_t n, std::size_t dim,
                                      const std::vector<std::string>& labels,
                                      const features::Provenance& source,
                                      const SvmOptions& options = {}) {
    require(n == labels.size(), "train_svm: feature/label count mismatch");
    require(n >= 2, "train_svm: need at least 2 samples");

    LinearClassifier clf;
    clf.dim = dim;
    clf.c_reg = options.c_reg;
    clf.seed = options.seed;
    clf.source = source;
    {
        std::map<std::string, std::size_t> counts;
        for (const auto& l : labels) counts[l]++;
        require(counts.size() >= 2, "train_svm: need at least 2 classes");
        for (const auto& [label, count] : counts) {
            require(count >= 2, "train_svm: class \"" + label + "\" has fewer than 2 samples");
            clf.labels.push_back(label);
        }
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < dim; ++t)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = data[i * dim + t];

    if (options.standardize) {
        clf.standardized = true;
        clf.feature_mean.resize(dim);
        clf.feature_scale.resize(dim);
        for (std::size_t t = 0; t < dim; ++t) {
            const double mean = x.col(static_cast<Eigen::Index>(t)).mean();
            const double var =
                (x.col(static_cast<Eigen::Index>(t)).array() - mean).square().sum() /
                static_cast<double>(n);
            const double scale = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
            clf.feature_mean[t] = mean;
            clf.feature_scale[t] = scale;
            x.col(static_cast<Eigen::Index>(t)) =
                (x.col(static_cast<Eigen::Index>(t)).array() - mean) * scale;
        }
    }

    clf.weights.assign(clf.labels.size() * dim, 0.0);
    clf.biases.assign(clf.labels.size(), 0.0);
    for (std::size_t c = 0; c < clf.labels.size(); ++c) {
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) y(static_cast<Eigen::Index>(i)) = labels[i] == clf.labels[c] ? 1.0 : -1.0;
        Eigen::VectorXd w;
        double b = 0.0;
        clf.objective_history.push_back(
            detail::train_binary_hinge(x, y, options.c_reg, options.max_epochs, w, b));
        clf.epochs = std::max(clf.epochs, static_cast<int>(clf.objective_history.back().size()) - 1);
        for (std::size_t t = 0; t < dim; ++t) clf.weights[c * dim + t] = w(static_cast<Eigen::Index>(t));
        clf.biases[c] = b;
    }
    return clf;
}

/// Per-class decision scores w.x + b; the predicted label is the argmax, ties
/// resolved toward the lowest class index.
inline std::vector<double> decision_scores(const LinearClassifier& clf, const float* v) {
    std::vector<double> scores(clf.labels.size());
    for (std::size_t c = 0; c < clf.labels.size(); ++c) {
        const double* w = clf.weight(c);
        double acc = 0.0;
        if (clf.standardized) {
            for (std::size_t t = 0; t < clf.dim; ++t)
                acc += w[t] * ((static_cast<double>(v[t]) - clf.feature_mean[t]) * clf.feature_scale[t]);
        } else {
            for (std::size_t t = 0; t < clf.dim; ++t) acc += w[t] * static_cast<double>(v[t]);
        }
        scores[c] = acc + clf.biases[c];
    }
    return scores;
}

struct Prediction {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> scores;  // per sample, per class
};

inline Prediction predict_raw(const LinearClassifier& clf, const float* data, std::size_t n) {
    Prediction out;
    out.labels.reserve(n);
    out.scores.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto scores = decision_scores(clf, data + i * clf.dim);
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.size(); ++c)
            if (scores[c] > scores[best]) best = c;
        out.labels.push_back(clf.labels[best]);
        out.scores.push_back(std::move(scores));
    }
    return out;
}

// FeatureVector front-ends

inline LinearClassifier train_svm(const std::vector<features::FeatureVector>& vs,
                                  const std::vector<std::string>& labels,
                                  const SvmOptions& options = {}) {
    std::size_t dim = 0;
    features::Provenance prov;
    require(!vs.empty(), "train_svm: no feature vectors");
    dim = vs[0].dim();
    prov = vs[0].provenance;
    std::vector<float> data(vs.size() * dim);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        features::require_same_provenance(vs[i].provenance, prov, "train_svm");
        require(vs[i].dim() == dim, "train_svm: dimension mismatch");
        std::copy(vs[i].values.begin(), vs[i].values.end(), data.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    auto clf = train_svm_raw(data.data(), vs.size(), dim, labels, prov, options);
    clf.training_accuracy = evaluate(predict_raw(clf, data.data(), vs.size()).labels, labels).accuracy;
    return clf;
}

inline Prediction predict(const LinearClassifier& clf,
                          const std::vector<features::FeatureVector>& vs) {
    std::vector<float> data(vs.size() * clf.dim);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        require(vs[i].dim() == clf.dim, "predict: dimension mismatch");
        std::copy(vs[i].values.begin(), vs[i].values.end(), data.begin() + static_cast<std::ptrdiff_t>(i * clf.dim));
    }
    return predict_raw(clf, data.data(), vs.size());
}

// ---------------------------------------------------------------------------
// ridge regression (closed form, optional log-target transform)

struct Regressor {
    std::size_t dim = 0;
    std::vector<double> weights;
    double bias = 0.0;
    std::string transform = "identity";  // identity | log
    double lambda = 1.0;
    features::Provenance source;
};

inline Regressor train_regressor_raw(const float* data, std::size_t n, std::size_t dim,
                                     const std::vector<double>& targets, double lambda,
                                     const std::string& transform,
                                     const features::Provenance& source) {
    require(n == targets.size(), "train_regressor: feature/target count mismatch");
    require(n >= 2, "train_regressor: need at least 2 samples");
    require(lambda >= 0.0, "train_regressor: lambda must be non-negative");
    require(transform == "identity" || transform == "log",
            "train_regressor: unknown target transform \"" + transform + "\"");

    Eigen::VectorXd y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double t = targets[i];
        if (transform == "log") {
            require(t > 0.0, "train_regressor: log transform requires positive targets");
            t = std::log(t);
        }
        y(static_cast<Eigen::Index>(i)) = t;
    }

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < dim; ++t)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = data[i * dim + t];

    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    x.rowwise() -= x_mean;
    y.array() -= y_mean;

    Eigen::VectorXd w;
    if (lambda == 0.0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
        require(static_cast<std::size_t>(qr.rank()) == dim && n > dim,
                "train_regressor: rank-deficient system at lambda=0; increase lambda");
        w = qr.solve(y);
    } else if (dim <= n) {
        Eigen::MatrixXd gram = x.transpose() * x;
        gram.diagonal().array() += lambda;
        w = gram.ldlt().solve(x.transpose() * y);
    } else {
        // dual form keeps the solve at N x N when D > N
        Eigen::MatrixXd gram = x * x.transpose();
        gram.diagonal().array() += lambda;
        const Eigen::VectorXd alpha = gram.ldlt().solve(y);
        w = x.transpose() * alpha;
    }

    Regressor r;
    r.dim = dim;
    r.lambda = lambda;
    r.transform = transform;
    r.source = source;
    r.weights.assign(w.data(), w.data() + dim);
    r.bias = y_mean - x_mean.dot(w);
    return r;
}

inline Regressor train_regressor(const std::vector<features::FeatureVector>& vs,
                                 const std::vector<double>& targets, double lambda,
                                 const std::string& transform = "identity") {
    require(!vs.empty(), "train_regressor: no feature vectors");
    const std::size_t dim = vs[0].dim();
    const auto prov = vs[0].provenance;
    std::vector<float> data(vs.size() * dim);
    for (std::size_t i = 0; i < vs.size(); ++i) {
        features::require_same_provenance(vs[i].provenance, prov, "train_regressor");
        require(vs[i].dim() == dim, "train_regressor: dimension mismatch");
        std::copy(vs[i].values.begin(), vs[i].values.end(), data.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }
    return train_regressor_raw(data.data(), vs.size(), dim, targets, lambda, transform, prov);
}

inline double predict_value_raw(const Regressor& r, const float* v) {
    double acc = r.bias;
    for (std::size_t t = 0; t < r.dim; ++t) acc += r.weights[t] * static_cast<double>(v[t]);
    return r.transform == "log" ? std::exp(acc) : acc;
}

inline double predict_value(const Regressor& r, const features::FeatureVector& v) {
    require(v.dim() == r.dim, "predict_value: dimension mismatch");
    return predict_value_raw(r, v.values.data());
}

/// RMSE of relative errors (prediction - truth)/truth; the percent-framed
/// "standard error" used in reports.
inline double relative_rmse(const std::vector<double>& predictions,
                            const std::vector<double>& truths) {
    require(predictions.size() == truths.size() && !truths.empty(), "relative_rmse: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        require(truths[i] != 0.0, "relative_rmse: zero truth value");
        const double e = (predictions[i] - truths[i]) / truths[i];
        acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(truths.size()));
}

// ---------------------------------------------------------------------------
// cross-validation

/// Stratified fold assignment: classes are dealt in sorted order through one
/// global round-robin cursor, so fold sizes differ by at most one and class
/// balance is preserved.
inline std::vector<int> stratified_folds(const std::vector<std::string>& labels, int folds,
                                         std::uint64_t seed) {
    require(folds >= 2 && folds <= static_cast<int>(labels.size()),
            "cross_validate: folds out of range");
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    std::vector<int> assignment(labels.size(), 0);
    int cursor = 0;
    std::uint64_t stream = 0;
    for (auto& [label, indices] : by_class) {
        Rng rng(mix_seed(seed, stream++));
        rng.shuffle(indices);
        for (const auto idx : indices) {
            assignment[idx] = cursor;
            cursor = (cursor + 1) % folds;
        }
    }
    return assignment;
}

inline std::vector<int> shuffled_folds(std::size_t n, int folds, std::uint64_t seed) {
    require(folds >= 2 && folds <= static_cast<int>(n), "cross_validate: folds out of range");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<int> assignment(n, 0);
    for (std::size_t i = 0; i < n; ++i) assignment[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    return assignment;
}

struct ClassifierCV {
    std::vector<EvalReport> folds;
    std::vector<int> assignment;
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;
};

inline ClassifierCV cross_validate_classifier(const std::vector<features::FeatureVector>& vs,
                                              const std::vector<std::string>& labels, int folds,
                                              std::uint64_t seed, const SvmOptions& options = {}) {
    require(vs.size() == labels.size(), "cross_validate: feature/label count mismatch");
    ClassifierCV cv;
    cv.assignment = stratified_folds(labels, folds, seed);
    for (int f = 0; f < folds; ++f) {
        std::vector<features::FeatureVector> train_x, test_x;
        std::vector<std::string> train_y, test_y;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            if (cv.assignment[i] == f) {
                test_x.push_back(vs[i]);
                test_y.push_back(labels[i]);
            } else {
                train_x.push_back(vs[i]);
                train_y.push_back(labels[i]);
            }
        }
        const auto clf = train_svm(train_x, train_y, options);
        cv.folds.push_back(evaluate(predict(clf, test_x).labels, test_y));
    }
    for (const auto& rep : cv.folds) cv.mean_accuracy += rep.accuracy / folds;
    for (const auto& rep : cv.folds)
        cv.std_accuracy += (rep.accuracy - cv.mean_accuracy) * (rep.accuracy - cv.mean_accuracy);
    cv.std_accuracy = std::sqrt(cv.std_accuracy / folds);
    return cv;
}

struct RegressorCV {
    struct Fold {
        double rmse = 0.0;
        double rel_rmse = 0.0;
        double mae = 0.0;
        std::size_t count = 0;
    };
    std::vector<Fold> folds;
    std::vector<int> assignment;
    double mean_rel_rmse = 0.0;
    double std_rel_rmse = 0.0;
};

inline RegressorCV cross_validate_regressor(const std::vector<features::FeatureVector>& vs,
                                            const std::vector<double>& targets, int folds,
                                            std::uint64_t seed, double lambda,
                                            const std::string& transform = "identity") {
    require(vs.size() == targets.size(), "cross_validate: feature/target count mismatch");
    RegressorCV cv;
    cv.assignment = shuffled_folds(vs.size(), folds, seed);
    for (int f = 0; f < folds; ++f) {
        std::vector<features::FeatureVector> train_x;
        std::vector<double> train_y;
        std::vector<std::size_t> test_idx;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            if (cv.assignment[i] == f) {
                test_idx.push_back(i);
            } else {
                train_x.push_back(vs[i]);
                train_y.push_back(targets[i]);
            }
        }
        const auto reg = train_regressor(train_x, train_y, lambda, transform);
        RegressorCV::Fold fold;
        fold.count = test_idx.size();
        std::vector<double> preds, truths;
        for (const auto i : test_idx) {
            const double p = predict_value(reg, vs[i]);
            preds.push_back(p);
            truths.push_back(targets[i]);
            fold.rmse += (p - targets[i]) * (p - targets[i]);
            fold.mae += std::abs(p - targets[i]);
        }
        fold.rmse = std::sqrt(fold.rmse / static_cast<double>(fold.count));
        fold.mae /= static_cast<double>(fold.count);
        fold.rel_rmse = relative_rmse(preds, truths);
        cv.folds.push_back(fold);
    }
    for (const auto& fold : cv.folds) cv.mean_rel_rmse += fold.rel_rmse / folds;
    for (const auto& fold : cv.folds)
        cv.std_rel_rmse +=
            (fold.rel_rmse - cv.mean_rel_rmse) * (fold.rel_rmse - cv.mean_rel_rmse);
    cv.std_rel_rmse = std::sqrt(cv.std_rel_rmse / folds);
    return cv;
}

// ---------------------------------------------------------------------------
// serialization (model.json + float32 payload)

namespace detail {

inline void write_f32(const std::string& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "model payload: cannot open " + path);
    for (const auto d : values) {
        const float f = static_cast<float>(d);
        out.write(reinterpret_cast<const char*>(&f), 4);
    }
}

inline std::vector<double> read_f32(const std::string& path, std::size_t expect) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "model payload: cannot open " + path);
    std::vector<double> out(expect);
    for (auto& d : out) {
        float f = 0.f;
        in.read(reinterpret_cast<char*>(&f), 4);
        require(in.gcount() == 4, "model payload truncated: " + path);
        d = f;
    }
    return out;
}

inline nlohmann::json provenance_json(const features::Provenance& p) {
    return {{"backbone", p.backbone}, {"layer", p.layer}, {"encoding", p.encoding}};
}

inline features::Provenance provenance_from_json(const nlohmann::json& j) {
    return {j.at("backbone").get<std::string>(), j.at("layer").get<std::string>(),
            j.at("encoding").get<std::string>()};
}

}  // namespace detail

inline void save_classifier(const LinearClassifier& clf, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["type"] = "linear-svm";
    j["labels"] = clf.labels;
    j["dim"] = clf.dim;
    j["C"] = clf.c_reg;
    j["seed"] = clf.seed;
    j["epochs"] = clf.epochs;
    j["training_accuracy"] = clf.training_accuracy;
    j["standardized"] = clf.standardized;
    j["source"] = detail::provenance_json(clf.source);
    std::ofstream out(std::filesystem::path(dir) / "model.json", std::ios::trunc);
    require(out.good(), "save_classifier: cannot write model.json in " + dir);
    out << j.dump(2) << "\n";

    std::vector<double> payload = clf.weights;
    payload.insert(payload.end(), clf.biases.begin(), clf.biases.end());
    if (clf.standardized) {
        payload.insert(payload.end(), clf.feature_mean.begin(), clf.feature_mean.end());
        payload.insert(payload.end(), clf.feature_scale.begin(), clf.feature_scale.end());
    }
    detail::write_f32((std::filesystem::path(dir) / "payload.bin").string(), payload);
}

inline LinearClassifier load_classifier(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "model.json");
    require(in.good(), "load_classifier: missing model.json in " + dir);
    try {
        const auto j = nlohmann::json::parse(in);
        require(j.at("type") == "linear-svm", "load_classifier: not a linear-svm model: " + dir);
        LinearClassifier clf;
        clf.labels = j.at("labels").get<std::vector<std::string>>();
        clf.dim = j.at("dim").get<std::size_t>();
        clf.c_reg = j.at("C").get<double>();
        clf.seed = j.at("seed").get<std::uint64_t>();
        clf.epochs = j.at("epochs").get<int>();
        clf.training_accuracy = j.at("training_accuracy").get<double>();
        clf.standardized = j.at("standardized").get<bool>();
        clf.source = detail::provenance_from_json(j.at("source"));

        const std::size_t c = clf.labels.size();
        std::size_t expect = c * clf.dim + c;
        if (clf.standardized) expect += 2 * clf.dim;
        const auto payload =
            detail::read_f32((std::filesystem::path(dir) / "payload.bin").string(), expect);
        auto it = payload.begin();
        clf.weights.assign(it, it + static_cast<std::ptrdiff_t>(c * clf.dim));
        it += static_cast<std::ptrdiff_t>(c * clf.dim);
        clf.biases.assign(it, it + static_cast<std::ptrdiff_t>(c));
        it += static_cast<std::ptrdiff_t>(c);
        if (clf.standardized) {
            clf.feature_mean.assign(it, it + static_cast<std::ptrdiff_t>(clf.dim));
            it += static_cast<std::ptrdiff_t>(clf.dim);
            clf.feature_scale.assign(it, payload.end());
        }
        return clf;
    } catch (const nlohmann::json::exception& e) {
        fail("load_classifier: bad model.json in " + dir + ": " + e.what());
    }
}

inline void save_regressor(const Regressor& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["type"] = "ridge";
    j["dim"] = r.dim;
    j["lambda"] = r.lambda;
    j["transform"] = r.transform;
    j["bias"] = r.bias;
    j["source"] = detail::provenance_json(r.source);
    std::ofstream out(std::filesystem::path(dir) / "model.json", std::ios::trunc);
    require(out.good(), "save_regressor: cannot write model.json in " + dir);
    out << j.dump(2) << "\n";
    detail::write_f32((std::filesystem::path(dir) / "payload.bin").string(), r.weights);
}

inline Regressor load_regressor(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "model.json");
    require(in.good(), "load_regressor: missing model.json in " + dir);
    try {
        const auto j = nlohmann::json::parse(in);
        require(j.at("type") == "ridge", "load_regressor: not a ridge model: " + dir);
        Regressor r;
        r.dim = j.at("dim").get<std::size_t>();
        r.lambda = j.at("lambda").get<double>();
        r.transform = j.at("transform").get<std::string>();
        r.bias = j.at("bias").get<double>();
        r.source = detail::provenance_from_json(j.at("source"));
        r.weights = detail::read_f32((std::filesystem::path(dir) / "payload.bin").string(), r.dim);
        return r;
    } catch (const nlohmann::json::exception& e) {
        fail("load_regressor: bad model.json in " + dir + ": " + e.what());
    }
}

}  // namespace mct::classify
