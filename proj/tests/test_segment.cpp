#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "mct/backbone_builder.hpp"
#include "mct/rng.hpp"
#include "mct/segment.hpp"
#include "mct/synthgen.hpp"
#include "test_support.hpp"

using namespace mct;
using namespace mct::segment;

namespace {

// left half fine dark-etched grains, right half coarse light texture
struct TwoTexture {
    dataio::Micrograph image;
    SegmentationMask mask;
};

TwoTexture make_two_texture(int size, std::uint64_t seed) {
    synthgen::RenderStyle fine;
    fine.matrix_gray = 200;
    fine.boundary_gray = 40;
    fine.seed = mix_seed(seed, 1);
    const auto g_fine = synthgen::potts_evolve(size, size, 32, 5, mix_seed(seed, 2));
    const auto img_fine = synthgen::render_micrograph(g_fine, fine);

    synthgen::RenderStyle coarse;
    coarse.matrix_gray = 140;
    coarse.boundary_gray = 90;
    coarse.blur_sigma = 1.5;
    coarse.seed = mix_seed(seed, 3);
    const auto g_coarse = synthgen::potts_evolve(size, size, 32, 200, mix_seed(seed, 4));
    const auto img_coarse = synthgen::render_micrograph(g_coarse, coarse);

    TwoTexture out;
    out.image = dataio::Micrograph::blank("twotex-" + std::to_string(seed), size, size, 1);
    out.mask = SegmentationMask::blank(size, size, {"fine", "coarse"});
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) {
            const bool right = c >= size / 2;
            out.image.at(r, c) = right ? img_coarse.at(r, c) : img_fine.at(r, c);
            out.mask.at(r, c) = right ? 1 : 0;
        }
    return out;
}

features::Backbone small_backbone(const testsup::TempDir& dir) {
    features::BackboneArch arch;
    arch.id = "seg-test";
    arch.block_channels = {8, 16};
    arch.convs_per_block = {2, 2};
    features::write_backbone(arch, 5, dir.str("bb.onnx"));
    return features::load_backbone(dir.str("bb.onnx"));
}

const std::vector<std::string> kLayers{"conv1_2", "conv2_2"};

BinaryMask random_binary(int h, int w, std::uint64_t seed) {
    BinaryMask m = BinaryMask::blank(h, w);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.below(2) ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("sample_training_pixels honors per-class budgets", "[segment]") {
    SegmentationMask mask = SegmentationMask::blank(20, 20, {"bg", "fg"});
    for (int r = 0; r < 20; ++r)
        for (int c = 17; c < 20; ++c) mask.at(r, c) = 1;  // 60 fg pixels

    SECTION("classes smaller than n contribute everything") {
        const auto picks = sample_training_pixels(mask, 100, 3);
        std::map<int, int> counts;
        for (const auto& p : picks) counts[p.label]++;
        CHECK(counts[0] == 100);
        CHECK(counts[1] == 60);
    }
    SECTION("per-class counts never exceed n") {
        const auto picks = sample_training_pixels(mask, 25, 3);
        std::map<int, int> counts;
        for (const auto& p : picks) counts[p.label]++;
        CHECK(counts[0] == 25);
        CHECK(counts[1] == 25);
    }
    SECTION("same seed gives the identical sample") {
        const auto a = sample_training_pixels(mask, 30, 9);
        const auto b = sample_training_pixels(mask, 30, 9);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].row == b[i].row);
            CHECK(a[i].col == b[i].col);
        }
    }
    SECTION("sampled labels match the mask") {
        for (const auto& p : sample_training_pixels(mask, 40, 7))
            REQUIRE(p.label == mask.at(p.row, p.col));
    }
    SECTION("empty mask is rejected") {
        SegmentationMask empty = SegmentationMask::blank(0, 0, {"a"});
        CHECK_THROWS_WITH(sample_training_pixels(empty, 5, 0),
                          Catch::Matchers::ContainsSubstring("empty"));
    }
}

TEST_CASE("pixel classifier learns a two-texture image", "[segment]") {
    testsup::TempDir dir("pixclf");
    const auto backbone = small_backbone(dir);
    const auto sample = make_two_texture(96, 11);

    PixelTrainOptions opt;
    opt.pixels_per_class = 400;
    opt.seed = 1;
    const auto pc = train_pixel_classifier(backbone, {{sample.image, sample.mask}}, kLayers, opt);

    SECTION("training pixel accuracy is high") {
        CHECK(pc.clf.training_accuracy >= 0.95);
        CHECK(pc.hypercolumn_dim == 16u + 32u);
    }
    SECTION("degenerate n=1 still fits") {
        PixelTrainOptions tiny;
        tiny.pixels_per_class = 2;
        tiny.seed = 2;
        const auto small =
            train_pixel_classifier(backbone, {{sample.image, sample.mask}}, kLayers, tiny);
        CHECK(small.classes == std::vector<std::string>{"fine", "coarse"});
    }
    SECTION("same seed gives identical weights") {
        const auto again =
            train_pixel_classifier(backbone, {{sample.image, sample.mask}}, kLayers, opt);
        CHECK(again.clf.weights == pc.clf.weights);
    }
    SECTION("dense prediction covers the image deterministically") {
        const auto mask1 = predict_mask(pc, backbone, sample.image);
        CHECK(mask1.height == 96);
        CHECK(mask1.width == 96);
        for (const auto l : mask1.labels) REQUIRE(l < 2);
        const auto mask2 = predict_mask(pc, backbone, sample.image);
        CHECK(mask1.labels == mask2.labels);
    }
    SECTION("held-out composite segments above 90 percent") {
        const auto held_out = make_two_texture(96, 77);
        const auto predicted = predict_mask(pc, backbone, held_out.image);
        const auto rep = evaluate_mask(predicted, held_out.mask);
        CHECK(rep.pixel_accuracy >= 0.9);
    }
    SECTION("class table mismatch across masks is rejected") {
        auto other = make_two_texture(96, 5);
        other.mask.classes = {"x", "y"};
        CHECK_THROWS_WITH(train_pixel_classifier(
                              backbone, {{sample.image, sample.mask}, {other.image, other.mask}},
                              kLayers, opt),
                          Catch::Matchers::ContainsSubstring("class tables"));
    }
}

TEST_CASE("more training pixels never segment worse on the benchmark", "[segment]") {
    testsup::TempDir dir("mono");
    const auto backbone = small_backbone(dir);

    double acc_small = 0.0, acc_large = 0.0;
    const int seeds = 5;
    for (int s = 0; s < seeds; ++s) {
        const auto sample = make_two_texture(96, 100 + static_cast<std::uint64_t>(s));
        for (const std::size_t n : {std::size_t{50}, std::size_t{2000}}) {
            PixelTrainOptions opt;
            opt.pixels_per_class = n;
            opt.seed = static_cast<std::uint64_t>(s);
            const auto pc =
                train_pixel_classifier(backbone, {{sample.image, sample.mask}}, kLayers, opt);
            const auto rep = evaluate_mask(predict_mask(pc, backbone, sample.image), sample.mask);
            (n == 50 ? acc_small : acc_large) += rep.pixel_accuracy / seeds;
        }
    }
    CHECK(acc_large >= acc_small);
}

TEST_CASE("evaluate_mask identity, inversion, and counting oracle", "[segment]") {
    SECTION("identical masks are perfect") {
        SegmentationMask m = SegmentationMask::blank(8, 8, {"a", "b"});
        m.at(3, 3) = 1;
        const auto rep = evaluate_mask(m, m);
        CHECK(rep.pixel_accuracy == 1.0);
        for (const auto v : rep.iou) CHECK(v == 1.0);
    }
    SECTION("complemented binary mask scores zero") {
        SegmentationMask a = SegmentationMask::blank(6, 6, {"a", "b"});
        SegmentationMask b = a;
        for (auto& l : b.labels) l = 1;
        CHECK(evaluate_mask(b, a).pixel_accuracy == 0.0);
    }
    SECTION("random pair matches a per-pixel counting oracle") {
        Rng rng(3);
        SegmentationMask pred = SegmentationMask::blank(16, 16, {"a", "b", "c"});
        SegmentationMask truth = pred;
        for (auto& l : pred.labels) l = static_cast<std::uint8_t>(rng.below(3));
        for (auto& l : truth.labels) l = static_cast<std::uint8_t>(rng.below(3));
        const auto rep = evaluate_mask(pred, truth);

        std::size_t correct = 0;
        for (std::size_t i = 0; i < pred.labels.size(); ++i)
            if (pred.labels[i] == truth.labels[i]) ++correct;
        CHECK(rep.pixel_accuracy == Catch::Approx(static_cast<double>(correct) / 256.0));

        for (std::uint8_t cls = 0; cls < 3; ++cls) {
            std::int64_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < pred.labels.size(); ++i) {
                if (pred.labels[i] == cls && truth.labels[i] == cls) ++tp;
                if (pred.labels[i] == cls && truth.labels[i] != cls) ++fp;
                if (pred.labels[i] != cls && truth.labels[i] == cls) ++fn;
            }
            REQUIRE(rep.precision[cls] == Catch::Approx(static_cast<double>(tp) / (tp + fp)));
            REQUIRE(rep.recall[cls] == Catch::Approx(static_cast<double>(tp) / (tp + fn)));
            REQUIRE(rep.iou[cls] == Catch::Approx(static_cast<double>(tp) / (tp + fp + fn)));
        }
    }
    SECTION("mismatches are rejected") {
        SegmentationMask a = SegmentationMask::blank(4, 4, {"a"});
        SegmentationMask b = SegmentationMask::blank(5, 4, {"a"});
        CHECK_THROWS_WITH(evaluate_mask(a, b), Catch::Matchers::ContainsSubstring("dimension"));
        SegmentationMask c = SegmentationMask::blank(4, 4, {"z"});
        CHECK_THROWS_WITH(evaluate_mask(a, c), Catch::Matchers::ContainsSubstring("class tables"));
    }
}

TEST_CASE("compose_masks is conjunction with lattice laws", "[segment]") {
    const auto a = random_binary(12, 9, 1);
    const auto b = random_binary(12, 9, 2);
    const auto c = random_binary(12, 9, 3);

    SECTION("all-ones region is the identity element") {
        CHECK(compose_masks(a, BinaryMask::blank(12, 9, 1)).data == a.data);
    }
    SECTION("all-zeros region absorbs") {
        CHECK(compose_masks(a, BinaryMask::blank(12, 9, 0)).count() == 0);
    }
    SECTION("matches the element-wise AND oracle") {
        const auto got = compose_masks(a, b);
        for (std::size_t i = 0; i < got.data.size(); ++i)
            REQUIRE(got.data[i] == ((a.data[i] && b.data[i]) ? 1 : 0));
    }
    SECTION("commutative, associative, idempotent") {
        CHECK(compose_masks(a, b).data == compose_masks(b, a).data);
        CHECK(compose_masks(compose_masks(a, b), c).data ==
              compose_masks(a, compose_masks(b, c)).data);
        CHECK(compose_masks(a, a).data == a.data);
    }
    SECTION("dimension mismatch") {
        CHECK_THROWS_WITH(compose_masks(a, BinaryMask::blank(9, 12)),
                          Catch::Matchers::ContainsSubstring("dimension"));
    }
}

TEST_CASE("mask files round-trip with their class tables", "[segment]") {
    testsup::TempDir dir("maskio");
    Rng rng(8);
    SegmentationMask mask = SegmentationMask::blank(40, 40, {"matrix", "carbide", "pearlite"});
    for (auto& l : mask.labels) l = static_cast<std::uint8_t>(rng.below(3));

    save_mask(mask, dir.str("m.png"));
    const auto back = load_mask(dir.str("m.png"));
    CHECK(back.labels == mask.labels);
    CHECK(back.classes == mask.classes);
}
