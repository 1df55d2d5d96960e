#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sfp/error.hpp"
#include "sfp/pyramid.hpp"
#include "sfp/tensor.hpp"

// Desk-scale sparsifying autoencoder. The encoder produces a dense feature
// pyramid with per-cell keypoint scores, a Bernoulli gate sparsifies every
// level, and a U-Net style decoder reconstructs the image from the sparse
// levels (the deepest one as bottleneck, the others through skip
// connections). Gradients are hand-written; the gate uses a straight-through
// estimator.

namespace sfp::autoencoder {

enum class ReconstructionNorm { L1, L2 };

/// 3x3 convolution, stride 1, zero padding 1.
/// weight is out x (9 * in); column `tap * in + channel`, tap = (dr + 1) * 3 + (dc + 1).
struct Conv3x3 {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;

    int in_channels() const { return static_cast<int>(weight.cols() / 9); }
    int out_channels() const { return static_cast<int>(weight.rows()); }
};

struct BatchNorm {
    Eigen::VectorXd gamma;
    Eigen::VectorXd beta;
    Eigen::VectorXd running_mean;
    Eigen::VectorXd running_var;
};

/// maxpool(3, 2, 1) -> batch norm -> ReLU -> conv
struct EncoderBlock {
    BatchNorm norm;
    Conv3x3 conv;
};

/// upsample(2x nearest) -> conv -> ReLU -> [concat skip] -> conv (-> ReLU unless output block)
struct DecoderBlock {
    Conv3x3 up_conv;
    Conv3x3 fuse_conv;
};

struct NetConfig {
    std::vector<pyramid::LevelSpec> levels = pyramid::default_levels();
    int image_channels = 1;
    /// Decoder width at the resolution of level i, i = 0 (image) .. n-1.
    std::vector<int> decoder_widths = {8, 16, 32};
    double lambda = 1e-3;
    ReconstructionNorm norm = ReconstructionNorm::L1;
};

struct NetParams {
    NetConfig config;
    std::vector<EncoderBlock> encoder;    // encoder[i - 1] produces level i
    std::vector<Eigen::VectorXd> omega;   // omega[i - 1] scores level i
    std::vector<DecoderBlock> decoder;    // decoder[i - 1] lifts level i to level i - 1

    int levels() const { return static_cast<int>(config.levels.size()); }
};

NetParams init_params(const NetConfig& config, std::uint64_t seed);

/// Same shapes as `params`, every trainable value and running statistic zero.
NetParams zeros_like(const NetParams& params);

/// Throws InvalidArgument when shapes disagree with the channel plan or values are non-finite.
void validate(const NetParams& params);

struct ParamView {
    std::string name;
    double* data;
    Eigen::Index size;
};

/// Every trainable tensor in a fixed order. Running statistics are excluded.
std::vector<ParamView> trainable_parameters(NetParams& params);
Eigen::Index parameter_count(const NetParams& params);

using TrainBatch = std::vector<Tensor>;

/// Throws unless the batch is non-empty, uniform, values in [0, 1], and dims divisible by 2^n.
void validate_batch(const TrainBatch& batch, const NetParams& params);

struct LossReport {
    double total = 0.0;
    double reconstruction = 0.0;
    double compression = 0.0;
    std::vector<double> keypoints_per_level;
};

/// total = reconstruction + lambda * compression.
LossReport loss(const Tensor& image, const Tensor& reconstruction, std::span<const ScoreMap> scores,
                std::span<const int> dims, double lambda, ReconstructionNorm norm = ReconstructionNorm::L1);

/// Gate state of one level of one image. Forward value of the gate is
/// bits + (p - anchor); with anchor = p this is the sampled mask and the
/// gradient with respect to p is one (straight-through).
struct LevelGate {
    Eigen::VectorXd bits;    // per cell, tensor cell order
    Eigen::VectorXd anchor;  // per cell
};
using MaskSet = std::vector<std::vector<LevelGate>>;  // [image][level - 1]

/// Dense pyramid with scores, inference-mode normalization.
pyramid::DensePyramid encode(const Tensor& image, const NetParams& params);

/// Decode a sparse pyramid, densified with zeros.
Tensor decode(const pyramid::SparsePyramid& sparse, const NetParams& params);

struct Gradients {
    NetParams grads;
    double lambda_grad = 0.0;  // d total / d lambda = mean compression
    LossReport report;
    MaskSet masks;
};

/// Batch-mean loss gradient with masks sampled from `seed` (training-mode normalization).
Gradients backward(const TrainBatch& batch, const NetParams& params, std::uint64_t seed);

/// Same with a frozen gate state.
Gradients backward(const TrainBatch& batch, const NetParams& params, const MaskSet& masks);

/// Batch-mean loss with a frozen gate state (training-mode normalization, no side effects).
LossReport evaluate_loss(const TrainBatch& batch, const NetParams& params, const MaskSet& masks);

struct TrainOptions {
    int steps = 500;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    double running_momentum = 0.1;
};

struct TrainResult {
    NetParams params;
    std::vector<LossReport> trace;
};

class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, std::vector<LossReport> trace)
        : NumericError("train", what), trace_(std::move(trace)) {}
    const std::vector<LossReport>& trace() const noexcept { return trace_; }

private:
    std::vector<LossReport> trace_;
};

/// Plain SGD. Throws DivergenceError with the trace so far when the loss turns non-finite.
TrainResult train(const TrainBatch& batch, NetParams params, const TrainOptions& options);

/// Mean number of cells per image with score >= tau, per level, using inference normalization.
std::vector<double> mean_kept_keypoints(const TrainBatch& batch, const NetParams& params, double tau);

struct GradCheckOptions {
    double epsilon = 1e-4;
    double tolerance = 1e-4;
    /// Gradients smaller than this are compared in absolute terms.
    double absolute_floor = 1e-6;
    std::uint64_t seed = 0;
    /// Applied to the analytic gradient before comparison (negative controls).
    std::function<void(NetParams&)> tamper;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_parameter;
    Eigen::Index checked = 0;
    /// Entries whose +/- epsilon evaluations crossed a ReLU, max-pool or |.|
    /// switch; the objective is not differentiable across them.
    Eigen::Index skipped_at_kinks = 0;
    bool passed = false;
};

GradCheckReport grad_check(const NetParams& params, const TrainBatch& batch, const GradCheckOptions& options);

}  // namespace sfp::autoencoder
