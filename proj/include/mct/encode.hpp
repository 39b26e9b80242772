#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mct/cluster.hpp"
#include "mct/common.hpp"
#include "mct/feature_vector.hpp"

namespace mct::features {

// ---------------------------------------------------------------------------
// PCA

struct PCAModel {
    std::size_t input_dim = 0;
    std::size_t out_dim = 0;
    std::vector<double> mean;                      // input_dim
    std::vector<double> components;                // out_dim x input_dim, orthonormal rows
    std::vector<double> explained_variance_ratio;  // non-increasing
    Provenance source;                             // provenance of the training vectors
    std::string model_id;                          // content id, set on fit/save

    const double* component(std::size_t i) const { return components.data() + i * input_dim; }

    std::string encoding_tag() const { return "pca-" + std::to_string(out_dim); }
};

namespace encdetail {

inline std::string content_id(const char* prefix, const std::vector<double>& payload) {
    return std::string(prefix) + "-" + hex_id(fnv1a(payload.data(), payload.size() * sizeof(double)));
}

// deterministic sign: the entry of largest magnitude is positive
inline void canonicalize_sign(double* row, std::size_t dim) {
    std::size_t arg = 0;
    for (std::size_t t = 1; t < dim; ++t)
        if (std::abs(row[t]) > std::abs(row[arg])) arg = t;
    if (row[arg] < 0.0)
        for (std::size_t t = 0; t < dim; ++t) row[t] = -row[t];
}

// orthonormal completion for rank-deficient trailing components
inline void fill_orthonormal(std::vector<double>& components, std::size_t from, std::size_t d,
                             std::size_t dim) {
    std::size_t axis = 0;
    for (std::size_t i = from; i < d; ++i) {
        while (true) {
            require(axis < dim, "fit_pca: cannot complete an orthonormal basis");
            std::vector<double> v(dim, 0.0);
            v[axis++] = 1.0;
            for (std::size_t j = 0; j < i; ++j) {
                const double* cj = components.data() + j * dim;
                double dot = 0.0;
                for (std::size_t t = 0; t < dim; ++t) dot += v[t] * cj[t];
                for (std::size_t t = 0; t < dim; ++t) v[t] -= dot * cj[t];
            }
            double norm = 0.0;
            for (const auto x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm > 1e-8) {
                for (std::size_t t = 0; t < dim; ++t) components[i * dim + t] = v[t] / norm;
                break;
            }
        }
        encdetail::canonicalize_sign(components.data() + i * dim, dim);
    }
}

}  // namespace encdetail

/// Exact PCA by eigen-decomposition of the covariance (or its Gram dual when
/// D > N, which has the identical nonzero spectrum). Components carry a
/// deterministic sign convention.
inline PCAModel fit_pca_raw(const double* data, std::size_t n, std::size_t dim, std::size_t d,
                            const Provenance& source) {
    require(n >= 2, "fit_pca: need at least 2 vectors");
    require(d >= 1 && d <= std::min(n - 1, dim),
            "fit_pca: d must lie in [1, min(N-1, D)] (got d=" + std::to_string(d) + ", N=" +
                std::to_string(n) + ", D=" + std::to_string(dim) + ")");

    PCAModel model;
    model.input_dim = dim;
    model.out_dim = d;
    model.source = source;
    model.mean.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < dim; ++t) model.mean[t] += data[i * dim + t];
    for (auto& m : model.mean) m /= static_cast<double>(n);

    Eigen::MatrixXd xc(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < dim; ++t)
            xc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) =
                data[i * dim + t] - model.mean[t];

    const double denom = static_cast<double>(n - 1);
    const double total_variance = xc.squaredNorm() / denom;
    model.components.assign(d * dim, 0.0);
    model.explained_variance_ratio.assign(d, 0.0);

    std::vector<std::pair<double, Eigen::VectorXd>> eig;  // (eigenvalue, component)
    if (dim <= n) {
        const Eigen::MatrixXd cov = xc.transpose() * xc / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        require(solver.info() == Eigen::Success, "fit_pca: eigen-decomposition failed");
        for (std::size_t i = 0; i < d; ++i) {
            const auto idx = static_cast<Eigen::Index>(dim - 1 - i);  // ascending order in Eigen
            eig.emplace_back(std::max(solver.eigenvalues()(idx), 0.0), solver.eigenvectors().col(idx));
        }
    } else {
        const Eigen::MatrixXd gram = xc * xc.transpose() / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
        require(solver.info() == Eigen::Success, "fit_pca: eigen-decomposition failed");
        for (std::size_t i = 0; i < d; ++i) {
            const auto idx = static_cast<Eigen::Index>(n - 1 - i);
            const double lambda = std::max(solver.eigenvalues()(idx), 0.0);
            // v = Xc^T u / sqrt((N-1) lambda) maps Gram eigenvectors to
            // covariance eigenvectors with unit norm
            const double s = std::sqrt(denom * lambda);
            Eigen::VectorXd v;
            if (s > 1e-12 * std::sqrt(std::max(total_variance, 1.0))) {
                v = xc.transpose() * solver.eigenvectors().col(idx) / s;
            } else {
                v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));  // rank exhausted
            }
            eig.emplace_back(lambda, std::move(v));
        }
    }

    std::size_t filled = 0;
    for (std::size_t i = 0; i < d; ++i) {
        const double norm = eig[i].second.norm();
        if (norm < 0.5) break;  // rank exhausted; complete with a canonical basis below
        for (std::size_t t = 0; t < dim; ++t)
            model.components[i * dim + t] = eig[i].second(static_cast<Eigen::Index>(t)) / norm;
        encdetail::canonicalize_sign(model.components.data() + i * dim, dim);
        model.explained_variance_ratio[i] =
            total_variance > 0.0 ? eig[i].first / total_variance : 0.0;
        filled = i + 1;
    }
    encdetail::fill_orthonormal(model.components, filled, d, dim);

    model.model_id = encdetail::content_id("pca", model.components);
    return model;
}

inline PCAModel fit_pca(const std::vector<FeatureVector>& vs, std::size_t d) {
    std::size_t dim = 0;
    Provenance prov;
    const auto data = cluster::to_matrix(vs, dim, prov, "fit_pca");
    return fit_pca_raw(data.data(), vs.size(), dim, d, prov);
}

inline void apply_pca_raw(const PCAModel& model, const float* v, double* out) {
    for (std::size_t i = 0; i < model.out_dim; ++i) {
        const double* c = model.component(i);
        double acc = 0.0;
        for (std::size_t t = 0; t < model.input_dim; ++t)
            acc += (static_cast<double>(v[t]) - model.mean[t]) * c[t];
        out[i] = acc;
    }
}

inline FeatureVector apply_pca(const PCAModel& model, const FeatureVector& v) {
    require_same_provenance(v.provenance, model.source, "apply_pca");
    require(v.dim() == model.input_dim, "apply_pca: dimension mismatch");
    std::vector<double> proj(model.out_dim);
    apply_pca_raw(model, v.values.data(), proj.data());
    FeatureVector out;
    out.values.assign(proj.begin(), proj.end());
    out.provenance = {v.provenance.backbone, v.provenance.layer, model.encoding_tag()};
    return out;
}

// ---------------------------------------------------------------------------
// VLAD

struct VLADCodebook {
    std::size_t k = 0;
    std::size_t descriptor_dim = 0;
    std::vector<double> centroids;  // k x dim
    std::string model_id;

    const double* centroid(std::size_t j) const { return centroids.data() + j * descriptor_dim; }

    std::string encoding_tag() const { return "vlad-" + std::to_string(k); }
};

/// Codebook from pooled local descriptors (one activation cell = one
/// descriptor) via the cluster module's k-means.
inline VLADCodebook fit_vlad_codebook(const double* descriptors, std::size_t n, std::size_t dim,
                                      std::size_t k, std::uint64_t seed) {
    const auto model = cluster::kmeans_fit(descriptors, n, dim, k, 300, 10, seed);
    VLADCodebook cb;
    cb.k = k;
    cb.descriptor_dim = dim;
    cb.centroids = model.centroids;
    cb.model_id = encdetail::content_id("vlad", cb.centroids);
    return cb;
}

/// Residual sums against nearest centroids, power-normalized (signed square
/// root) then L2-normalized; an all-zero accumulation stays all-zero.
inline FeatureVector vlad_encode(const float* descriptors, std::size_t n, std::size_t dim,
                                 const VLADCodebook& cb, const Provenance& base_provenance) {
    require(n >= 1, "vlad_encode: need at least one descriptor");
    require(dim == cb.descriptor_dim, "vlad_encode: descriptor width " + std::to_string(dim) +
                                          " does not match the codebook (" +
                                          std::to_string(cb.descriptor_dim) + ")");
    std::vector<double> acc(cb.k * dim, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const float* x = descriptors + i * dim;
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cb.k; ++j) {
            double d = 0.0;
            const double* c = cb.centroid(j);
            for (std::size_t t = 0; t < dim; ++t) {
                const double diff = static_cast<double>(x[t]) - c[t];
                d += diff * diff;
            }
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        double* slot = acc.data() + best * dim;
        const double* c = cb.centroid(best);
        for (std::size_t t = 0; t < dim; ++t) slot[t] += static_cast<double>(x[t]) - c[t];
    }

    for (auto& v : acc) v = (v >= 0.0 ? 1.0 : -1.0) * std::sqrt(std::abs(v));
    double norm = 0.0;
    for (const auto v : acc) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0)
        for (auto& v : acc) v /= norm;

    FeatureVector out;
    out.values.assign(acc.begin(), acc.end());
    out.provenance = {base_provenance.backbone, base_provenance.layer, cb.encoding_tag()};
    return out;
}

// ---------------------------------------------------------------------------
// serialization (model.json + float32 payload, feature-store layout)

namespace encdetail {

inline void write_payload(const std::string& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(out.good(), "model payload: cannot open " + path);
    for (const auto d : values) {
        const float f = static_cast<float>(d);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff),
                           static_cast<char>((bits >> 24) & 0xff)};
        out.write(b, 4);
    }
}

inline std::vector<double> read_payload(const std::string& path, std::size_t expect) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "model payload: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    require(buf.size() == expect * 4, "model payload: expected " + std::to_string(expect) +
                                          " float32 values in " + path + ", found " +
                                          std::to_string(buf.size() / 4));
    std::vector<double> out(expect);
    for (std::size_t i = 0; i < expect; ++i) {
        const std::uint32_t bits = std::uint32_t(buf[4 * i]) | (std::uint32_t(buf[4 * i + 1]) << 8) |
                                   (std::uint32_t(buf[4 * i + 2]) << 16) |
                                   (std::uint32_t(buf[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &bits, 4);
        out[i] = f;
    }
    return out;
}

}  // namespace encdetail

inline void save_pca(const PCAModel& model, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["type"] = "pca";
    j["input_dim"] = model.input_dim;
    j["out_dim"] = model.out_dim;
    j["explained_variance_ratio"] = model.explained_variance_ratio;
    j["source"] = {{"backbone", model.source.backbone},
                   {"layer", model.source.layer},
                   {"encoding", model.source.encoding}};
    j["model_id"] = model.model_id;
    std::ofstream out(std::filesystem::path(dir) / "model.json", std::ios::trunc);
    require(out.good(), "save_pca: cannot write model.json in " + dir);
    out << j.dump(2) << "\n";

    std::vector<double> payload = model.mean;
    payload.insert(payload.end(), model.components.begin(), model.components.end());
    encdetail::write_payload((std::filesystem::path(dir) / "payload.bin").string(), payload);
}

inline PCAModel load_pca(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "model.json");
    require(in.good(), "load_pca: missing model.json in " + dir);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        require(j.at("type") == "pca", "load_pca: not a pca model: " + dir);
        PCAModel model;
        model.input_dim = j.at("input_dim").get<std::size_t>();
        model.out_dim = j.at("out_dim").get<std::size_t>();
        model.explained_variance_ratio = j.at("explained_variance_ratio").get<std::vector<double>>();
        model.source = {j.at("source").at("backbone").get<std::string>(),
                        j.at("source").at("layer").get<std::string>(),
                        j.at("source").at("encoding").get<std::string>()};
        model.model_id = j.at("model_id").get<std::string>();
        const auto payload =
            encdetail::read_payload((std::filesystem::path(dir) / "payload.bin").string(),
                                    model.input_dim * (model.out_dim + 1));
        model.mean.assign(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(model.input_dim));
        model.components.assign(payload.begin() + static_cast<std::ptrdiff_t>(model.input_dim),
                                payload.end());
        return model;
    } catch (const nlohmann::json::exception& e) {
        fail("load_pca: bad model.json in " + dir + ": " + e.what());
    }
}

inline void save_vlad(const VLADCodebook& cb, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["type"] = "vlad";
    j["k"] = cb.k;
    j["descriptor_dim"] = cb.descriptor_dim;
    j["model_id"] = cb.model_id;
    std::ofstream out(std::filesystem::path(dir) / "model.json", std::ios::trunc);
    require(out.good(), "save_vlad: cannot write model.json in " + dir);
    out << j.dump(2) << "\n";
    encdetail::write_payload((std::filesystem::path(dir) / "payload.bin").string(), cb.centroids);
}

inline VLADCodebook load_vlad(const std::string& dir) {
    std::ifstream in(std::filesystem::path(dir) / "model.json");
    require(in.good(), "load_vlad: missing model.json in " + dir);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        require(j.at("type") == "vlad", "load_vlad: not a vlad model: " + dir);
        VLADCodebook cb;
        cb.k = j.at("k").get<std::size_t>();
        cb.descriptor_dim = j.at("descriptor_dim").get<std::size_t>();
        cb.model_id = j.at("model_id").get<std::string>();
        cb.centroids = encdetail::read_payload((std::filesystem::path(dir) / "payload.bin").string(),
                                               cb.k * cb.descriptor_dim);
        return cb;
    } catch (const nlohmann::json::exception& e) {
        fail("load_vlad: bad model.json in " + dir + ": " + e.what());
    }
}

}  // namespace mct::features
