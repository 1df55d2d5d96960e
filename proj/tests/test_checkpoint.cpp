#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "sfp/checkpoint.hpp"
#include "sfp/error.hpp"
#include "sfp/synth.hpp"
#include "test_support.hpp"

namespace sfp::autoencoder {
namespace {

NetParams sample_params() {
    NetConfig c;
    const std::vector<int> dims{4, 6, 8};
    c.levels = pyramid::make_levels(dims);
    c.decoder_widths = {4, 5, 6};
    c.lambda = 0.125;
    c.norm = ReconstructionNorm::L2;
    auto p = init_params(c, 77);
    p.encoder[1].norm.running_mean.setConstant(0.3);
    p.encoder[1].norm.running_var.setConstant(1.7);
    return p;
}

void expect_same(const NetParams& a, const NetParams& b) {
    EXPECT_EQ(a.config.levels, b.config.levels);
    EXPECT_EQ(a.config.decoder_widths, b.config.decoder_widths);
    EXPECT_EQ(a.config.lambda, b.config.lambda);
    EXPECT_EQ(a.config.norm, b.config.norm);
    NetParams ca = a, cb = b;
    auto va = trainable_parameters(ca);
    auto vb = trainable_parameters(cb);
    ASSERT_EQ(va.size(), vb.size());
    for (std::size_t v = 0; v < va.size(); ++v) {
        ASSERT_EQ(va[v].size, vb[v].size) << va[v].name;
        for (Eigen::Index j = 0; j < va[v].size; ++j) ASSERT_EQ(va[v].data[j], vb[v].data[j]) << va[v].name;
    }
    for (std::size_t i = 0; i < a.encoder.size(); ++i) {
        EXPECT_TRUE(a.encoder[i].norm.running_mean == b.encoder[i].norm.running_mean);
        EXPECT_TRUE(a.encoder[i].norm.running_var == b.encoder[i].norm.running_var);
    }
}

TEST(Checkpoint, StringRoundTripIsExact) {
    const auto p = sample_params();
    expect_same(p, checkpoint_from_string(checkpoint_to_string(p)));
}

TEST(Checkpoint, FileRoundTripPreservesInference) {
    test::TempDir dir;
    const auto p = sample_params();
    save_checkpoint(p, dir / "net.json");
    const auto q = load_checkpoint(dir / "net.json");
    expect_same(p, q);
    const auto img = synth::synth_images(1, 1, 16, 16)[0];
    EXPECT_TRUE(encode(img, p).levels[2].scores == encode(img, q).levels[2].scores);
}

TEST(Checkpoint, RejectsWrongVersion) {
    auto doc = nlohmann::json::parse(checkpoint_to_string(sample_params()));
    doc["version"] = 99;
    EXPECT_THROW(checkpoint_from_string(doc.dump()), FormatError);
}

TEST(Checkpoint, RejectsForeignDocument) {
    EXPECT_THROW(checkpoint_from_string("{\"format\":\"other\"}"), FormatError);
    EXPECT_THROW(checkpoint_from_string("not json"), FormatError);
    EXPECT_THROW(checkpoint_from_string("{}"), FormatError);
}

TEST(Checkpoint, RejectsShapeMismatch) {
    auto doc = nlohmann::json::parse(checkpoint_to_string(sample_params()));
    auto& w = doc["encoder"][0]["conv"]["weight"];
    w["rows"] = w["rows"].get<int>() + 1;
    EXPECT_THROW(checkpoint_from_string(doc.dump()), FormatError);
    auto doc2 = nlohmann::json::parse(checkpoint_to_string(sample_params()));
    doc2["omega"][0].erase(0);
    EXPECT_THROW(checkpoint_from_string(doc2.dump()), FormatError);
}

TEST(Checkpoint, MissingFile) {
    test::TempDir dir;
    EXPECT_THROW(load_checkpoint(dir / "absent.json"), IoError);
}

}  // namespace
}  // namespace sfp::autoencoder
