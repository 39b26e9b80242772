#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mct/onnx.hpp"
#include "mct/rng.hpp"

// Builds random-weight VGG-style backbones in the exchange format. The
// toolkit consumes backbones through files, so tests and the synthetic
// pipelines generate theirs here (He-initialized, seeded); externally trained
// weights load through the same path.

namespace mct::features {

struct BackboneArch {
    std::string id = "mct-slim";
    std::vector<int> block_channels = {16, 32, 48, 64};
    std::vector<int> convs_per_block = {2, 2, 2, 2};
    bool classifier_head = false;
};

inline BackboneArch slim_arch() { return {}; }

inline BackboneArch vgg16_arch(double width_mult = 1.0) {
    BackboneArch a;
    a.id = "mct-vgg16";
    a.block_channels.clear();
    for (const int c : {64, 128, 256, 512, 512})
        a.block_channels.push_back(std::max(1, static_cast<int>(std::lround(c * width_mult))));
    a.convs_per_block = {2, 2, 3, 3, 3};
    return a;
}

inline onnx::Model build_backbone_model(const BackboneArch& arch, std::uint64_t seed) {
    require(arch.block_channels.size() == arch.convs_per_block.size(),
            "build_backbone_model: block lists disagree");
    require(!arch.block_channels.empty(), "build_backbone_model: no blocks");

    onnx::Model model;
    model.producer_name = arch.id;
    model.metadata["mct.backbone_id"] = arch.id;
    model.metadata["mct.input_mean"] = "123.68,116.78,103.94";
    model.metadata["mct.input_scale"] = "1,1,1";
    model.graph.name = arch.id;
    model.graph.inputs.push_back({"input", {1, 3, -1, -1}});

    Rng rng(seed);
    std::string prev = "input";
    int c_in = 3;
    for (std::size_t b = 0; b < arch.block_channels.size(); ++b) {
        const int c_out = arch.block_channels[b];
        for (int i = 0; i < arch.convs_per_block[b]; ++i) {
            const std::string stem =
                "conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);

            onnx::Tensor w;
            w.name = stem + "_w";
            w.dims = {c_out, c_in, 3, 3};
            const std::size_t fan_in = static_cast<std::size_t>(c_in) * 9;
            const double he = std::sqrt(2.0 / static_cast<double>(fan_in));
            w.values.resize(static_cast<std::size_t>(c_out) * fan_in);
            for (auto& v : w.values) v = static_cast<float>(rng.normal(0.0, he));
            model.graph.initializers.push_back(std::move(w));

            onnx::Tensor bias;
            bias.name = stem + "_b";
            bias.dims = {c_out};
            bias.values.assign(static_cast<std::size_t>(c_out), 0.f);
            model.graph.initializers.push_back(std::move(bias));

            onnx::Node conv;
            conv.op_type = "Conv";
            conv.name = stem;
            conv.inputs = {prev, stem + "_w", stem + "_b"};
            conv.outputs = {stem + "_out"};
            conv.attributes.push_back({"kernel_shape", 7, 0.f, 0, "", {}, {3, 3}});
            conv.attributes.push_back({"pads", 7, 0.f, 0, "", {}, {1, 1, 1, 1}});
            conv.attributes.push_back({"strides", 7, 0.f, 0, "", {}, {1, 1}});
            model.graph.nodes.push_back(std::move(conv));

            onnx::Node relu;
            relu.op_type = "Relu";
            relu.name = "relu" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
            relu.inputs = {stem + "_out"};
            relu.outputs = {stem + "_relu"};
            model.graph.nodes.push_back(std::move(relu));

            prev = stem + "_relu";
            c_in = c_out;
        }
        onnx::Node pool;
        pool.op_type = "MaxPool";
        pool.name = "pool" + std::to_string(b + 1);
        pool.inputs = {prev};
        prev = "pool" + std::to_string(b + 1) + "_out";
        pool.outputs = {prev};
        pool.attributes.push_back({"kernel_shape", 7, 0.f, 0, "", {}, {2, 2}});
        pool.attributes.push_back({"strides", 7, 0.f, 0, "", {}, {2, 2}});
        pool.attributes.push_back({"ceil_mode", 2, 0.f, 1, "", {}, {}});
        model.graph.nodes.push_back(std::move(pool));
    }

    if (arch.classifier_head) {
        onnx::Node gap;
        gap.op_type = "GlobalAveragePool";
        gap.name = "head_pool";
        gap.inputs = {prev};
        gap.outputs = {"head_pool_out"};
        model.graph.nodes.push_back(std::move(gap));

        onnx::Node flatten;
        flatten.op_type = "Flatten";
        flatten.name = "head_flatten";
        flatten.inputs = {"head_pool_out"};
        flatten.outputs = {"head_flat"};
        flatten.attributes.push_back({"axis", 2, 0.f, 1, "", {}, {}});
        model.graph.nodes.push_back(std::move(flatten));

        onnx::Tensor fc;
        fc.name = "head_w";
        fc.dims = {10, arch.block_channels.back()};
        fc.values.assign(static_cast<std::size_t>(10 * arch.block_channels.back()), 0.01f);
        model.graph.initializers.push_back(std::move(fc));

        onnx::Node gemm;
        gemm.op_type = "Gemm";
        gemm.name = "head_fc";
        gemm.inputs = {"head_flat", "head_w"};
        gemm.outputs = {"logits"};
        gemm.attributes.push_back({"transB", 2, 0.f, 1, "", {}, {}});
        model.graph.nodes.push_back(std::move(gemm));
        prev = "logits";
    }

    model.graph.outputs.push_back({prev, {}});
    return model;
}

inline void write_backbone(const BackboneArch& arch, std::uint64_t seed, const std::string& path) {
    onnx::save_model(build_backbone_model(arch, seed), path);
}

}  // namespace mct::features
