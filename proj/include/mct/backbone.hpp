#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mct/common.hpp"
#include "mct/feature_vector.hpp"
#include "mct/image.hpp"
#include "mct/onnx.hpp"

namespace mct::features {

/// Post-rectification activations of one extractable layer, HWC row-major,
/// h = ceil(H/stride), w = ceil(W/stride).
struct ActivationMap {
    std::string layer;
    int height = 0;
    int width = 0;
    int channels = 0;
    int stride = 1;
    std::vector<float> data;

    float at(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * width + c) * channels + ch];
    }
};

using ActivationStack = std::map<std::string, ActivationMap>;

struct LayerDesc {
    std::string name;    // name of the producing convolution node
    int stride = 1;      // cumulative stride at this depth
    int channels = 0;
    std::string tensor;  // rectified output tensor in the graph
};

/// Pretrained convolutional backbone consumed through the exchange format.
/// Immutable after load; extraction calls may run concurrently.
class Backbone {
public:
    std::string id;
    std::vector<LayerDesc> layers;
    std::array<float, 3> input_mean{123.68f, 116.78f, 103.94f};
    std::array<float, 3> input_scale{1.f, 1.f, 1.f};
    bool default_normalization = false;  // true when metadata was absent
    int min_input_size = 1;

    const LayerDesc* find_layer(const std::string& name) const {
        for (const auto& l : layers)
            if (l.name == name) return &l;
        return nullptr;
    }

    const LayerDesc& layer_or_fail(const std::string& name) const {
        const auto* l = find_layer(name);
        if (!l) {
            std::string available;
            for (const auto& d : layers) available += (available.empty() ? "" : ", ") + d.name;
            fail("backbone \"" + id + "\": unknown layer \"" + name + "\" (available: " + available +
                 ")");
        }
        return *l;
    }

    /// The documented default: the last rectified convolution at cumulative
    /// stride 8 (the fourth block in VGG-style nets), else the deepest layer.
    std::string default_layer() const {
        require(!layers.empty(), "backbone \"" + id + "\": no extractable layers");
        const LayerDesc* pick = nullptr;
        for (const auto& l : layers)
            if (l.stride == 8) pick = &l;
        return pick ? pick->name : layers.back().name;
    }

    // execution graph (dependency cone of the extractable layers, topo order)
    struct PlanStep {
        onnx::Node node;
    };
    std::vector<PlanStep> plan;
    std::map<std::string, onnx::Tensor> initializers;
    std::string input_tensor;
    int input_channels = 3;
};

// ---------------------------------------------------------------------------
// runtime

namespace nn {

/// CHW float plane set flowing through the graph.
struct Plane {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float* channel(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
    const float* channel(int c) const {
        return data.data() + static_cast<std::size_t>(c) * height * width;
    }
};

struct PoolGeom {
    int out = 0;
    int pad_begin = 0;
};

inline int conv_out_size(int in, int kernel, int stride, int pad_total) {
    return (in + pad_total - kernel) / stride + 1;
}

// SAME_UPPER auto padding: out = ceil(in/stride)
inline void same_upper(int in, int kernel, int stride, int& out, int& pad_begin, int& pad_end) {
    out = (in + stride - 1) / stride;
    const int total = std::max((out - 1) * stride + kernel - in, 0);
    pad_begin = total / 2;
    pad_end = total - pad_begin;
}

inline Plane conv2d(const Plane& x, const onnx::Tensor& weight, const onnx::Tensor* bias,
                    const onnx::Node& node) {
    require(weight.dims.size() == 4, "conv: weight tensor must be 4-D");
    const int c_out = static_cast<int>(weight.dims[0]);
    const int c_in = static_cast<int>(weight.dims[1]);
    const int kh = static_cast<int>(weight.dims[2]);
    const int kw = static_cast<int>(weight.dims[3]);
    require(c_in == x.channels, "conv: input channel mismatch in node " + node.name);
    require(node.attr_int("group", 1) == 1, "conv: grouped convolution is not supported");
    for (const auto d : node.attr_ints("dilations", {1, 1}))
        require(d == 1, "conv: dilation is not supported");

    const auto strides = node.attr_ints("strides", {1, 1});
    const int sh = static_cast<int>(strides[0]), sw = static_cast<int>(strides[1]);

    int pt = 0, pb = 0, pl = 0, pr = 0, oh = 0, ow = 0;
    const auto* auto_pad = node.attr("auto_pad");
    if (auto_pad && (auto_pad->s == "SAME_UPPER" || auto_pad->s == "SAME_LOWER")) {
        same_upper(x.height, kh, sh, oh, pt, pb);
        same_upper(x.width, kw, sw, ow, pl, pr);
        if (auto_pad->s == "SAME_LOWER") {
            std::swap(pt, pb);
            std::swap(pl, pr);
        }
    } else {
        const auto pads = node.attr_ints("pads", {0, 0, 0, 0});
        pt = static_cast<int>(pads[0]);
        pl = static_cast<int>(pads[1]);
        pb = static_cast<int>(pads[2]);
        pr = static_cast<int>(pads[3]);
        oh = conv_out_size(x.height, kh, sh, pt + pb);
        ow = conv_out_size(x.width, kw, sw, pl + pr);
    }
    require(oh > 0 && ow > 0, "conv: output collapsed to zero size in node " + node.name);

    const int k_len = c_in * kh * kw;
    const std::size_t n_px = static_cast<std::size_t>(oh) * ow;
    // column-major: cols(k, p) at k + k_len*p
    std::vector<float> cols(static_cast<std::size_t>(k_len) * n_px, 0.f);
    for (int ci = 0; ci < c_in; ++ci) {
        const float* src = x.channel(ci);
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const int k = (ci * kh + ky) * kw + kx;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * sh - pt + ky;
                    if (iy < 0 || iy >= x.height) continue;
                    const std::size_t row_base = static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * sw - pl + kx;
                        if (ix < 0 || ix >= x.width) continue;
                        cols[static_cast<std::size_t>(k) +
                             static_cast<std::size_t>(k_len) * (row_base + ox)] =
                            src[static_cast<std::size_t>(iy) * x.width + ix];
                    }
                }
            }
    }

    Plane out;
    out.channels = c_out;
    out.height = oh;
    out.width = ow;
    out.data.resize(static_cast<std::size_t>(c_out) * n_px);

    using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> w_mat(weight.values.data(), c_out, k_len);
    Eigen::Map<const Eigen::MatrixXf> col_mat(cols.data(), k_len, static_cast<Eigen::Index>(n_px));
    Eigen::Map<RowMat> out_mat(out.data.data(), c_out, static_cast<Eigen::Index>(n_px));
    out_mat.noalias() = w_mat * col_mat;
    if (bias) {
        require(bias->values.size() == static_cast<std::size_t>(c_out), "conv: bias size mismatch");
        for (int c = 0; c < c_out; ++c) out_mat.row(c).array() += bias->values[static_cast<std::size_t>(c)];
    }
    return out;
}

inline PoolGeom pool_geom(int in, int kernel, int stride, int pad_begin, int pad_end, bool ceil_mode) {
    PoolGeom g;
    g.pad_begin = pad_begin;
    const int span = in + pad_begin + pad_end - kernel;
    g.out = (ceil_mode ? (span + stride - 1) / stride : span / stride) + 1;
    // the last window must start inside the input or its begin padding
    if (ceil_mode && (g.out - 1) * stride >= in + pad_begin) --g.out;
    return g;
}

inline Plane pool2d(const Plane& x, const onnx::Node& node, bool is_max) {
    const auto kernel = node.attr_ints("kernel_shape", {2, 2});
    const auto strides = node.attr_ints("strides", kernel);
    const auto pads = node.attr_ints("pads", {0, 0, 0, 0});
    const bool ceil_mode = node.attr_int("ceil_mode", 0) != 0;
    const int kh = static_cast<int>(kernel[0]), kw = static_cast<int>(kernel[1]);
    const int sh = static_cast<int>(strides[0]), sw = static_cast<int>(strides[1]);

    const PoolGeom gy = pool_geom(x.height, kh, sh, static_cast<int>(pads[0]),
                                  static_cast<int>(pads[2]), ceil_mode);
    const PoolGeom gx = pool_geom(x.width, kw, sw, static_cast<int>(pads[1]),
                                  static_cast<int>(pads[3]), ceil_mode);
    require(gy.out > 0 && gx.out > 0, "pool: output collapsed to zero size in node " + node.name);

    Plane out;
    out.channels = x.channels;
    out.height = gy.out;
    out.width = gx.out;
    out.data.resize(static_cast<std::size_t>(x.channels) * gy.out * gx.out);

    for (int c = 0; c < x.channels; ++c) {
        const float* src = x.channel(c);
        float* dst = out.channel(c);
        for (int oy = 0; oy < gy.out; ++oy)
            for (int ox = 0; ox < gx.out; ++ox) {
                const int y0 = std::max(oy * sh - gy.pad_begin, 0);
                const int y1 = std::min(oy * sh - gy.pad_begin + kh, x.height);
                const int x0 = std::max(ox * sw - gx.pad_begin, 0);
                const int x1 = std::min(ox * sw - gx.pad_begin + kw, x.width);
                float acc = is_max ? -std::numeric_limits<float>::infinity() : 0.f;
                int count = 0;
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx) {
                        const float v = src[static_cast<std::size_t>(y) * x.width + xx];
                        if (is_max)
                            acc = std::max(acc, v);
                        else
                            acc += v;
                        ++count;
                    }
                require(count > 0, "pool: empty window in node " + node.name);
                dst[static_cast<std::size_t>(oy) * gx.out + ox] = is_max ? acc : acc / static_cast<float>(count);
            }
    }
    return out;
}

}  // namespace nn

// ---------------------------------------------------------------------------
// loading

namespace bbdetail {

inline bool executable_op(const std::string& op) {
    return op == "Conv" || op == "Relu" || op == "MaxPool" || op == "AveragePool";
}

}  // namespace bbdetail

/// Loads a backbone from the exchange format. Extractable layers are the
/// rectified convolution outputs, named after their convolution nodes; any
/// classifier head past the convolutional trunk is ignored. Normalization
/// constants come from the `mct.input_mean` / `mct.input_scale` metadata (the
/// documented ImageNet defaults apply, with a warning, when absent).
inline Backbone load_backbone(const std::string& path) {
    const onnx::Model model = onnx::load_model(path);
    const auto& graph = model.graph;

    Backbone b;
    if (const auto it = model.metadata.find("mct.backbone_id"); it != model.metadata.end())
        b.id = it->second;
    else if (!model.producer_name.empty())
        b.id = model.producer_name;
    else
        b.id = std::filesystem::path(path).stem().string();

    auto parse3 = [&](const std::string& key, std::array<float, 3>& dst) {
        const auto it = model.metadata.find(key);
        if (it == model.metadata.end()) return false;
        float a = 0, bb = 0, c = 0;
        require(std::sscanf(it->second.c_str(), "%f,%f,%f", &a, &bb, &c) == 3,
                "backbone: malformed metadata " + key + "=\"" + it->second + "\"");
        dst = {a, bb, c};
        return true;
    };
    const bool has_mean = parse3("mct.input_mean", b.input_mean);
    const bool has_scale = parse3("mct.input_scale", b.input_scale);
    if (!has_mean || !has_scale) {
        b.default_normalization = true;
        std::fprintf(stderr,
                     "warning: backbone \"%s\" has no normalization metadata; using per-channel "
                     "means (123.68, 116.78, 103.94) and unit scale\n",
                     b.id.c_str());
    }

    for (const auto& t : graph.initializers) b.initializers[t.name] = t;

    // graph input = declared input that is not an initializer
    for (const auto& vi : graph.inputs)
        if (!b.initializers.count(vi.name)) {
            b.input_tensor = vi.name;
            if (vi.dims.size() == 4 && vi.dims[1] > 0) b.input_channels = static_cast<int>(vi.dims[1]);
            break;
        }
    require(!b.input_tensor.empty(), "backbone: graph has no data input");
    require(b.input_channels == 1 || b.input_channels == 3,
            "backbone: unsupported input channel count");

    // producer map and cumulative strides walked forward from the input
    std::map<std::string, const onnx::Node*> producer;
    for (const auto& n : graph.nodes)
        for (const auto& out : n.outputs) producer[out] = &n;

    // unknown ops propagate stride 1 here; if one sits inside the executed
    // trunk the cone check below rejects it. Iterated to a fixed point since
    // file order need not be topological.
    std::map<std::string, int> stride;
    stride[b.input_tensor] = 1;
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& n : graph.nodes) {
            if (n.inputs.empty() || !stride.count(n.inputs[0])) continue;
            const int in_stride = stride[n.inputs[0]];
            int factor = 1;
            if (n.op_type == "Conv" || n.op_type == "MaxPool" || n.op_type == "AveragePool") {
                const auto strides = n.attr_ints("strides", {1, 1});
                require(strides.size() >= 2 && strides[0] == strides[1],
                        "backbone: anisotropic strides are not supported (node " + n.name + ")");
                factor = static_cast<int>(strides[0]);
            }
            for (const auto& out : n.outputs)
                if (!stride.count(out)) {
                    stride[out] = in_stride * factor;
                    grew = true;
                }
        }
    }

    // extractable layers: Relu fed by Conv, named after the conv node
    for (const auto& n : graph.nodes) {
        if (n.op_type != "Relu" || n.inputs.empty() || n.outputs.empty()) continue;
        const auto it = producer.find(n.inputs[0]);
        if (it == producer.end() || it->second->op_type != "Conv") continue;
        const onnx::Node& conv = *it->second;
        require(conv.inputs.size() >= 2, "backbone: convolution without weights (node " + conv.name + ")");
        const auto w = b.initializers.find(conv.inputs[1]);
        require(w != b.initializers.end(),
                "backbone: missing weight initializer for node " + conv.name);
        LayerDesc desc;
        desc.name = !conv.name.empty() ? conv.name : n.outputs[0];
        desc.tensor = n.outputs[0];
        desc.channels = static_cast<int>(w->second.dims.at(0));
        require(stride.count(n.outputs[0]),
                "backbone: layer " + desc.name + " is not reachable from the input");
        desc.stride = stride[n.outputs[0]];
        b.layers.push_back(std::move(desc));
    }
    require(!b.layers.empty(), "backbone: no rectified convolution layers found in " + path);

    int prev = 0;
    for (const auto& l : b.layers) {
        require(l.stride >= prev, "backbone: cumulative strides must be non-decreasing");
        require(l.channels > 0, "backbone: layer with no channels");
        prev = l.stride;
        b.min_input_size = std::max(b.min_input_size, l.stride);
    }

    // dependency cone of the extractable outputs; anything else (e.g. a
    // fully connected head) is ignored, unsupported ops inside the cone fail
    std::set<std::string> needed;
    for (const auto& l : b.layers) needed.insert(l.tensor);
    bool changed = true;
    std::set<const onnx::Node*> cone;
    while (changed) {
        changed = false;
        for (const auto& n : graph.nodes) {
            if (cone.count(&n)) continue;
            bool produces_needed = false;
            for (const auto& out : n.outputs)
                if (needed.count(out)) produces_needed = true;
            if (!produces_needed) continue;
            cone.insert(&n);
            changed = true;
            for (const auto& in : n.inputs)
                if (!b.initializers.count(in)) needed.insert(in);
        }
    }
    for (const auto* n : cone)
        require(bbdetail::executable_op(n->op_type),
                "backbone: unsupported operator \"" + n->op_type + "\" in the convolutional trunk");

    // topological order over the cone
    std::set<std::string> ready{b.input_tensor};
    std::set<const onnx::Node*> emitted;
    while (emitted.size() < cone.size()) {
        bool progress = false;
        for (const auto& n : graph.nodes) {
            if (!cone.count(&n) || emitted.count(&n)) continue;
            bool deps_ready = true;
            for (const auto& in : n.inputs)
                if (!b.initializers.count(in) && !ready.count(in)) deps_ready = false;
            if (!deps_ready) continue;
            b.plan.push_back({n});
            emitted.insert(&n);
            for (const auto& out : n.outputs) ready.insert(out);
            progress = true;
        }
        require(progress, "backbone: graph has a cycle or dangling inputs");
    }
    return b;
}

// ---------------------------------------------------------------------------
// extraction

namespace bbdetail {

inline nn::Plane normalized_input(const Backbone& b, const dataio::Micrograph& m) {
    require(m.height >= b.min_input_size && m.width >= b.min_input_size,
            "extract_layer: image \"" + m.id + "\" is smaller than the backbone minimum input (" +
                std::to_string(b.min_input_size) + " px)");
    nn::Plane p;
    p.channels = b.input_channels;
    p.height = m.height;
    p.width = m.width;
    p.data.resize(static_cast<std::size_t>(p.channels) * m.pixel_count());
    for (int c = 0; c < p.channels; ++c) {
        float* dst = p.channel(c);
        // grayscale replicates across the backbone's channels at ingestion
        const int src_ch = m.channels == 1 ? 0 : std::min(c, m.channels - 1);
        for (std::size_t i = 0; i < m.pixel_count(); ++i) {
            const float v = static_cast<float>(m.pixels[i * static_cast<std::size_t>(m.channels) +
                                                        static_cast<std::size_t>(src_ch)]);
            dst[i] = (v - b.input_mean[static_cast<std::size_t>(c)]) *
                     b.input_scale[static_cast<std::size_t>(c)];
        }
    }
    return p;
}

inline ActivationMap to_hwc(const nn::Plane& p, const LayerDesc& desc, int img_h, int img_w) {
    const int eh = (img_h + desc.stride - 1) / desc.stride;
    const int ew = (img_w + desc.stride - 1) / desc.stride;
    require(p.height == eh && p.width == ew,
            "extract_layer: layer " + desc.name + " produced " + std::to_string(p.width) + "x" +
                std::to_string(p.height) + ", stride rule expects " + std::to_string(ew) + "x" +
                std::to_string(eh));
    ActivationMap out;
    out.layer = desc.name;
    out.height = p.height;
    out.width = p.width;
    out.channels = p.channels;
    out.stride = desc.stride;
    out.data.resize(p.data.size());
    for (int c = 0; c < p.channels; ++c) {
        const float* src = p.channel(c);
        for (int r = 0; r < p.height; ++r)
            for (int col = 0; col < p.width; ++col)
                out.data[(static_cast<std::size_t>(r) * p.width + col) * p.channels + c] =
                    src[static_cast<std::size_t>(r) * p.width + col];
    }
    require(all_finite(out.data.data(), out.data.size()),
            "extract_layer: non-finite activations in layer " + desc.name);
    return out;
}

}  // namespace bbdetail

/// Runs the trunk and returns the requested rectified layers.
inline ActivationStack extract_layers(const Backbone& b, const dataio::Micrograph& m,
                                      const std::vector<std::string>& layer_names) {
    require(!layer_names.empty(), "extract_layers: no layers requested");
    std::set<std::string> targets;
    for (const auto& name : layer_names) targets.insert(b.layer_or_fail(name).tensor);

    // restrict execution to the dependency cone of the requested tensors
    std::set<std::string> needed = targets;
    for (auto it = b.plan.rbegin(); it != b.plan.rend(); ++it) {
        bool wanted = false;
        for (const auto& out : it->node.outputs)
            if (needed.count(out)) wanted = true;
        if (!wanted) continue;
        for (const auto& in : it->node.inputs)
            if (!b.initializers.count(in)) needed.insert(in);
    }

    std::map<std::string, nn::Plane> env;
    env[b.input_tensor] = bbdetail::normalized_input(b, m);

    ActivationStack stack;
    for (const auto& step : b.plan) {
        const auto& node = step.node;
        bool wanted = false;
        for (const auto& out : node.outputs)
            if (needed.count(out)) wanted = true;
        if (!wanted) continue;

        const auto in_it = env.find(node.inputs.at(0));
        require(in_it != env.end(), "backbone: missing input tensor for node " + node.name);
        const nn::Plane& x = in_it->second;

        nn::Plane y;
        if (node.op_type == "Conv") {
            const auto& w = b.initializers.at(node.inputs.at(1));
            const onnx::Tensor* bias = nullptr;
            if (node.inputs.size() >= 3) {
                const auto bias_it = b.initializers.find(node.inputs[2]);
                require(bias_it != b.initializers.end(),
                        "backbone: missing bias initializer for node " + node.name);
                bias = &bias_it->second;
            }
            y = nn::conv2d(x, w, bias, node);
        } else if (node.op_type == "Relu") {
            y = x;
            for (auto& v : y.data) v = std::max(v, 0.f);
        } else if (node.op_type == "MaxPool") {
            y = nn::pool2d(x, node, /*is_max=*/true);
        } else if (node.op_type == "AveragePool") {
            y = nn::pool2d(x, node, /*is_max=*/false);
        } else {
            fail("backbone: unsupported operator \"" + node.op_type + "\"");
        }
        env[node.outputs.at(0)] = std::move(y);
    }

    for (const auto& name : layer_names) {
        const auto& desc = b.layer_or_fail(name);
        const auto it = env.find(desc.tensor);
        require(it != env.end(), "backbone: layer " + name + " was not computed");
        stack[name] = bbdetail::to_hwc(it->second, desc, m.height, m.width);
    }
    return stack;
}

inline ActivationMap extract_layer(const Backbone& b, const dataio::Micrograph& m,
                                   const std::string& layer_name) {
    auto stack = extract_layers(b, m, {layer_name});
    return std::move(stack.at(layer_name));
}

/// Flattens a layer into the whole-image feature vector; ordering is
/// row-major over (row, col, channel).
inline FeatureVector flatten_layer(const ActivationMap& a, const std::string& backbone_id) {
    FeatureVector v;
    v.values = a.data;  // HWC storage is already (row, col, channel) order
    v.provenance = {backbone_id, a.layer, "raw"};
    return v;
}

// ---------------------------------------------------------------------------
// hypercolumns

struct HypercolumnSet {
    std::vector<std::pair<int, int>> pixels;  // (row, col)
    std::vector<std::string> layers;
    std::size_t dim = 0;                      // K = sum of layer channels
    std::vector<float> matrix;                // pixels.size() x dim, row-major

    const float* row(std::size_t i) const { return matrix.data() + i * dim; }
};

namespace bbdetail {

/// Bilinear sample of one activation map at image-space pixel (r, c); grid
/// node (i, j) sits at image pixel (i*stride, j*stride), so stride-aligned
/// pixels reproduce activation cells exactly.
inline void sample_hypercolumn(const ActivationMap& a, int r, int c, float* dst) {
    const double fy = std::min(static_cast<double>(r) / a.stride, static_cast<double>(a.height - 1));
    const double fx = std::min(static_cast<double>(c) / a.stride, static_cast<double>(a.width - 1));
    const int y0 = static_cast<int>(fy);
    const int x0 = static_cast<int>(fx);
    const int y1 = std::min(y0 + 1, a.height - 1);
    const int x1 = std::min(x0 + 1, a.width - 1);
    const float wy = static_cast<float>(fy - y0);
    const float wx = static_cast<float>(fx - x0);
    const float w00 = (1 - wy) * (1 - wx), w01 = (1 - wy) * wx, w10 = wy * (1 - wx), w11 = wy * wx;
    const float* p00 = &a.data[(static_cast<std::size_t>(y0) * a.width + x0) * a.channels];
    const float* p01 = &a.data[(static_cast<std::size_t>(y0) * a.width + x1) * a.channels];
    const float* p10 = &a.data[(static_cast<std::size_t>(y1) * a.width + x0) * a.channels];
    const float* p11 = &a.data[(static_cast<std::size_t>(y1) * a.width + x1) * a.channels];
    for (int ch = 0; ch < a.channels; ++ch)
        dst[ch] = w00 * p00[ch] + w01 * p01[ch] + w10 * p10[ch] + w11 * p11[ch];
}

inline HypercolumnSet hypercolumns_from_stack(const ActivationStack& stack,
                                              const std::vector<std::string>& layer_order,
                                              const std::vector<std::pair<int, int>>& pixel_coords,
                                              int img_h, int img_w) {
    HypercolumnSet set;
    set.layers = layer_order;
    set.pixels = pixel_coords;
    for (const auto& name : layer_order) set.dim += static_cast<std::size_t>(stack.at(name).channels);
    set.matrix.resize(set.pixels.size() * set.dim);

    for (std::size_t i = 0; i < pixel_coords.size(); ++i) {
        const auto [r, c] = pixel_coords[i];
        require(r >= 0 && r < img_h && c >= 0 && c < img_w,
                "hypercolumns: pixel (" + std::to_string(r) + "," + std::to_string(c) +
                    ") outside the image");
        float* dst = set.matrix.data() + i * set.dim;
        for (const auto& name : layer_order) {
            const auto& a = stack.at(name);
            sample_hypercolumn(a, r, c, dst);
            dst += a.channels;
        }
    }
    return set;
}

}  // namespace bbdetail

/// Per-pixel multiscale vectors: each layer upsampled bilinearly to image
/// resolution and concatenated in the given layer order.
inline HypercolumnSet hypercolumns(const Backbone& b, const dataio::Micrograph& m,
                                   const std::vector<std::pair<int, int>>& pixel_coords,
                                   const std::vector<std::string>& layer_names) {
    const auto stack = extract_layers(b, m, layer_names);
    return bbdetail::hypercolumns_from_stack(stack, layer_names, pixel_coords, m.height, m.width);
}

}  // namespace mct::features
