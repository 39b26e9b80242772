#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mct/backbone.hpp"
#include "mct/classify.hpp"
#include "mct/common.hpp"
#include "mct/image_io.hpp"
#include "mct/mask.hpp"
#include "mct/rng.hpp"

namespace mct::segment {

/// Per-pixel constituent labels plus the class name table.
struct SegmentationMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;
    std::vector<std::string> classes;

    static SegmentationMask blank(int h, int w, std::vector<std::string> class_table,
                                  std::uint8_t fill = 0) {
        SegmentationMask m;
        m.height = h;
        m.width = w;
        m.classes = std::move(class_table);
        m.labels.assign(static_cast<std::size_t>(h) * w, fill);
        return m;
    }

    std::uint8_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }

    void validate() const {
        require(!classes.empty() && classes.size() <= 256, "SegmentationMask: bad class table");
        require(labels.size() == static_cast<std::size_t>(height) * width,
                "SegmentationMask: label buffer size mismatch");
        for (const auto l : labels)
            require(l < classes.size(), "SegmentationMask: label outside the class table");
    }
};

// ---------------------------------------------------------------------------
// mask file format: 8-bit indexed PNG + JSON class-table sidecar

inline std::string mask_sidecar_path(const std::string& png_path) {
    return (std::filesystem::path(png_path).parent_path() /
            (std::filesystem::path(png_path).stem().string() + ".json"))
        .string();
}

inline void save_mask(const SegmentationMask& mask, const std::string& png_path) {
    mask.validate();
    // deterministic palette: spread hues, class 0 dark
    std::vector<std::array<std::uint8_t, 3>> palette(mask.classes.size());
    for (std::size_t i = 0; i < palette.size(); ++i) {
        const double h = static_cast<double>(i) / static_cast<double>(palette.size()) * 6.0;
        const int sector = static_cast<int>(h);
        const double f = h - sector;
        const auto v = static_cast<std::uint8_t>(40 + 215 * (i == 0 ? 0.0 : 1.0));
        const auto p = static_cast<std::uint8_t>(40);
        const auto q = static_cast<std::uint8_t>(40 + (215 - 215 * f) * (i == 0 ? 0.0 : 1.0));
        const auto t = static_cast<std::uint8_t>(40 + 215 * f * (i == 0 ? 0.0 : 1.0));
        switch (sector % 6) {
            case 0: palette[i] = {v, t, p}; break;
            case 1: palette[i] = {q, v, p}; break;
            case 2: palette[i] = {p, v, t}; break;
            case 3: palette[i] = {p, q, v}; break;
            case 4: palette[i] = {t, p, v}; break;
            default: palette[i] = {v, p, q}; break;
        }
    }
    dataio::write_indexed_png(png_path, mask.height, mask.width, mask.labels, palette);

    nlohmann::json j;
    j["classes"] = mask.classes;
    std::ofstream out(mask_sidecar_path(png_path), std::ios::trunc);
    require(out.good(), "save_mask: cannot write sidecar for " + png_path);
    out << j.dump(2) << "\n";
}

inline SegmentationMask load_mask(const std::string& png_path) {
    const auto raw = dataio::read_png(png_path, /*expand_palette=*/false);
    require(raw.channels == 1 && raw.bit_depth == 8,
            "load_mask: expected an 8-bit indexed mask: " + png_path);
    SegmentationMask mask;
    mask.height = raw.height;
    mask.width = raw.width;
    mask.labels.resize(raw.samples.size());
    for (std::size_t i = 0; i < raw.samples.size(); ++i)
        mask.labels[i] = static_cast<std::uint8_t>(raw.samples[i]);

    std::ifstream in(mask_sidecar_path(png_path));
    require(in.good(), "load_mask: missing class-table sidecar for " + png_path);
    try {
        const auto j = nlohmann::json::parse(in);
        mask.classes = j.at("classes").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        fail("load_mask: bad sidecar for " + png_path + ": " + e.what());
    }
    mask.validate();
    return mask;
}

// ---------------------------------------------------------------------------
// training-pixel sampling

struct LabeledPixel {
    int row = 0;
    int col = 0;
    std::uint8_t label = 0;
};

/// Up to n pixels per class, uniform without replacement; classes smaller
/// than n contribute everything.
inline std::vector<LabeledPixel> sample_training_pixels(const SegmentationMask& mask,
                                                        std::size_t per_class, std::uint64_t seed) {
    mask.validate();
    require(!mask.labels.empty(), "sample_training_pixels: empty mask");
    std::map<std::uint8_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < mask.labels.size(); ++i) by_class[mask.labels[i]].push_back(i);

    std::vector<LabeledPixel> out;
    for (const auto& [label, pixels] : by_class) {
        std::vector<std::size_t> chosen;
        if (pixels.size() <= per_class) {
            chosen.assign(pixels.begin(), pixels.end());
        } else {
            Rng rng(mix_seed(seed, label));
            std::vector<std::size_t> idx;
            rng.sample_without_replacement(pixels.size(), per_class, std::back_inserter(idx));
            std::sort(idx.begin(), idx.end());
            for (const auto i : idx) chosen.push_back(pixels[i]);
        }
        for (const auto p : chosen)
            out.push_back({static_cast<int>(p) / mask.width, static_cast<int>(p) % mask.width, label});
    }
    return out;
}

// ---------------------------------------------------------------------------
// hypercolumn pixel classifier

struct PixelClassifier {
    classify::LinearClassifier clf;   // over standardized hypercolumn vectors
    std::vector<std::string> layers;  // contributing layers, in order
    std::vector<std::string> classes;
    std::string backbone_id;
    std::size_t hypercolumn_dim = 0;
    int tile = 64;  // dense prediction evaluates this many pixels square at a time
};

struct AnnotatedImage {
    dataio::Micrograph image;
    SegmentationMask mask;
};

struct PixelTrainOptions {
    std::size_t pixels_per_class = 2000;
    std::uint64_t seed = 0;
    double c_reg = 1.0;
    int max_epochs = 200;
};

inline PixelClassifier train_pixel_classifier(const features::Backbone& backbone,
                                              const std::vector<AnnotatedImage>& annotated,
                                              const std::vector<std::string>& layers,
                                              const PixelTrainOptions& options = {}) {
    require(!annotated.empty(), "train_pixel_classifier: need at least one annotated image");
    require(!layers.empty(), "train_pixel_classifier: empty layer list");
    const auto& classes = annotated[0].mask.classes;
    for (const auto& a : annotated) {
        require(a.mask.classes == classes,
                "train_pixel_classifier: class tables differ across masks");
        require(a.image.height == a.mask.height && a.image.width == a.mask.width,
                "train_pixel_classifier: image/mask dimensions differ for \"" + a.image.id + "\"");
    }

    std::vector<float> rows;
    std::vector<std::string> labels;
    std::size_t dim = 0;
    for (std::size_t img = 0; img < annotated.size(); ++img) {
        const auto picks =
            sample_training_pixels(annotated[img].mask, options.pixels_per_class,
                                   mix_seed(options.seed, img));
        std::vector<std::pair<int, int>> coords;
        coords.reserve(picks.size());
        for (const auto& p : picks) coords.emplace_back(p.row, p.col);
        const auto hc = features::hypercolumns(backbone, annotated[img].image, coords, layers);
        dim = hc.dim;
        rows.insert(rows.end(), hc.matrix.begin(), hc.matrix.end());
        for (const auto& p : picks) labels.push_back(classes[p.label]);
    }

    PixelClassifier pc;
    pc.layers = layers;
    pc.classes = classes;
    pc.backbone_id = backbone.id;
    pc.hypercolumn_dim = dim;
    const features::Provenance prov{backbone.id, "hypercolumn", "raw"};
    classify::SvmOptions svm;
    svm.c_reg = options.c_reg;
    svm.max_epochs = options.max_epochs;
    svm.seed = options.seed;
    svm.standardize = true;
    pc.clf = classify::train_svm_raw(rows.data(), labels.size(), dim, labels, prov, svm);
    pc.clf.training_accuracy =
        classify::evaluate(classify::predict_raw(pc.clf, rows.data(), labels.size()).labels, labels)
            .accuracy;
    return pc;
}

/// Dense prediction in tiles to bound hypercolumn memory; every output pixel
/// receives a label.
inline SegmentationMask predict_mask(const PixelClassifier& pc, const features::Backbone& backbone,
                                     const dataio::Micrograph& image) {
    require(backbone.id == pc.backbone_id,
            "predict_mask: classifier was trained on backbone \"" + pc.backbone_id + "\"");
    const auto stack = features::extract_layers(backbone, image, pc.layers);

    SegmentationMask out = SegmentationMask::blank(image.height, image.width, pc.classes);
    std::map<std::string, std::size_t> class_index;
    for (std::size_t i = 0; i < pc.classes.size(); ++i) class_index[pc.classes[i]] = i;

    for (int r0 = 0; r0 < image.height; r0 += pc.tile)
        for (int c0 = 0; c0 < image.width; c0 += pc.tile) {
            const int r1 = std::min(r0 + pc.tile, image.height);
            const int c1 = std::min(c0 + pc.tile, image.width);
            std::vector<std::pair<int, int>> coords;
            coords.reserve(static_cast<std::size_t>(r1 - r0) * (c1 - c0));
            for (int r = r0; r < r1; ++r)
                for (int c = c0; c < c1; ++c) coords.emplace_back(r, c);
            const auto hc = features::bbdetail::hypercolumns_from_stack(stack, pc.layers, coords,
                                                                        image.height, image.width);
            const auto pred = classify::predict_raw(pc.clf, hc.matrix.data(), coords.size());
            for (std::size_t i = 0; i < coords.size(); ++i)
                out.at(coords[i].first, coords[i].second) =
                    static_cast<std::uint8_t>(class_index[pred.labels[i]]);
        }
    return out;
}

// ---------------------------------------------------------------------------
// evaluation and composition

struct PixelEvalReport {
    double pixel_accuracy = 0.0;
    std::vector<std::string> classes;
    std::vector<double> precision;  // 0/0 -> 1
    std::vector<double> recall;
    std::vector<double> iou;
};

inline PixelEvalReport evaluate_mask(const SegmentationMask& pred, const SegmentationMask& truth) {
    require(pred.height == truth.height && pred.width == truth.width,
            "evaluate_mask: dimension mismatch");
    require(pred.classes == truth.classes, "evaluate_mask: class tables differ");

    const std::size_t c = truth.classes.size();
    std::vector<std::int64_t> confusion(c * c, 0);
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
        confusion[static_cast<std::size_t>(truth.labels[i]) * c + pred.labels[i]]++;
        if (truth.labels[i] == pred.labels[i]) ++correct;
    }

    PixelEvalReport rep;
    rep.classes = truth.classes;
    rep.pixel_accuracy = static_cast<double>(correct) / static_cast<double>(truth.labels.size());
    rep.precision.assign(c, 1.0);
    rep.recall.assign(c, 1.0);
    rep.iou.assign(c, 1.0);
    for (std::size_t j = 0; j < c; ++j) {
        std::int64_t col = 0, row = 0;
        for (std::size_t i = 0; i < c; ++i) {
            col += confusion[i * c + j];
            row += confusion[j * c + i];
        }
        const std::int64_t tp = confusion[j * c + j];
        if (col > 0) rep.precision[j] = static_cast<double>(tp) / col;
        if (row > 0) rep.recall[j] = static_cast<double>(tp) / row;
        const std::int64_t uni = col + row - tp;
        if (uni > 0) rep.iou[j] = static_cast<double>(tp) / uni;
    }
    return rep;
}

/// Element-wise conjunction of a feature mask with a region mask (the
/// two-stage workflow that intersects a line segmentation with a texture
/// region).
inline BinaryMask compose_masks(const BinaryMask& feature_mask, const BinaryMask& region_mask) {
    require(feature_mask.height == region_mask.height && feature_mask.width == region_mask.width,
            "compose_masks: dimension mismatch");
    BinaryMask out = BinaryMask::blank(feature_mask.height, feature_mask.width);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (feature_mask.data[i] && region_mask.data[i]) ? 1 : 0;
    return out;
}

inline BinaryMask class_mask(const SegmentationMask& mask, std::uint8_t class_label) {
    BinaryMask out = BinaryMask::blank(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.labels.size(); ++i)
        out.data[i] = mask.labels[i] == class_label ? 1 : 0;
    return out;
}

}  // namespace mct::segment
