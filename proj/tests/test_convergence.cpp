#include <gtest/gtest.h>

#include "sfp/autoencoder.hpp"
#include "sfp/synth.hpp"

namespace sfp::autoencoder {
namespace {

// Long run: the toy network trained to convergence on four 32x32 images.
TEST(Convergence, ReconstructionWithAllCellsKept) {
    const auto batch = synth::synth_images(7, 4, 32, 32);
    NetConfig config;
    config.lambda = 0.0;
    TrainOptions options;
    options.steps = 6000;
    options.learning_rate = 5e-5;
    options.seed = 3;
    const auto trained = train(batch, init_params(config, 1), options);

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto dense = encode(batch[i], trained.params);
        pyramid::SparsePyramid all;
        for (const auto& g : dense.levels)
            all.levels.push_back(pyramid::sparsify(g, pyramid::threshold_mask(g.scores, g.level, 0.0)));
        const double per_pixel_l1 = (decode(all, trained.params).data - batch[i].data).cwiseAbs().mean();
        EXPECT_LT(per_pixel_l1, 0.05) << "image " << i;
    }
}

}  // namespace
}  // namespace sfp::autoencoder
