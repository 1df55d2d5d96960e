#include "sfp/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace sfp::autoencoder {
namespace {

constexpr double kBnEps = 1e-5;

using Layers = std::vector<pyramid::LevelSpec>;

std::string level_name(const char* prefix, int level, const char* suffix) {
    return std::string(prefix) + "." + std::to_string(level) + "." + suffix;
}

void require_finite(const Eigen::MatrixXd& m, const std::string& layer) {
    if (!m.allFinite()) {
        throw NumericError(layer, "non-finite value");
    }
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// FNV-1a over the discrete switches of a forward pass (ReLU signs, pool
// argmax, residual signs). Two evaluations with equal signatures lie on the
// same smooth piece of the objective.
struct Signature {
    std::uint64_t value = 0xcbf29ce484222325ull;
    bool enabled = false;

    void mix(std::uint64_t v) {
        if (!enabled) {
            return;
        }
        value ^= v;
        value *= 0x100000001b3ull;
    }
    void mix_positive(const Eigen::MatrixXd& m) {
        if (!enabled) {
            return;
        }
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            mix(m.data()[i] > 0.0 ? 1u : 2u);
        }
    }
};

// ---- layers --------------------------------------------------------------

struct PoolCache {
    std::vector<Eigen::Index> argmax;  // (cell * channels + ch) -> input column
    int in_rows = 0;
    int in_cols = 0;
};

Tensor maxpool(const Tensor& x, PoolCache& cache) {
    const int channels = x.channels();
    Tensor y((x.rows + 1) / 2, (x.cols + 1) / 2, channels);
    cache.in_rows = x.rows;
    cache.in_cols = x.cols;
    cache.argmax.assign(static_cast<std::size_t>(y.cells()) * channels, -1);
    for (int r = 0; r < y.rows; ++r) {
        for (int c = 0; c < y.cols; ++c) {
            const Eigen::Index out = y.index(r, c);
            for (int ch = 0; ch < channels; ++ch) {
                double best = -std::numeric_limits<double>::infinity();
                Eigen::Index arg = -1;
                for (int dr = -1; dr <= 1; ++dr) {
                    const int rr = 2 * r + dr;
                    if (rr < 0 || rr >= x.rows) {
                        continue;
                    }
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int cc = 2 * c + dc;
                        if (cc < 0 || cc >= x.cols) {
                            continue;
                        }
                        const Eigen::Index in = x.index(rr, cc);
                        const double v = x.data(ch, in);
                        if (v > best) {
                            best = v;
                            arg = in;
                        }
                    }
                }
                y.data(ch, out) = best;
                cache.argmax[static_cast<std::size_t>(out) * channels + ch] = arg;
            }
        }
    }
    return y;
}

Tensor maxpool_backward(const Tensor& dy, const PoolCache& cache) {
    const int channels = dy.channels();
    Tensor dx(cache.in_rows, cache.in_cols, channels);
    for (Eigen::Index out = 0; out < dy.cells(); ++out) {
        for (int ch = 0; ch < channels; ++ch) {
            const Eigen::Index in = cache.argmax[static_cast<std::size_t>(out) * channels + ch];
            dx.data(ch, in) += dy.data(ch, out);
        }
    }
    return dx;
}

Eigen::MatrixXd im2col(const Tensor& x) {
    const int channels = x.channels();
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(9 * channels, x.cells());
    for (int r = 0; r < x.rows; ++r) {
        for (int c = 0; c < x.cols; ++c) {
            const Eigen::Index idx = x.index(r, c);
            for (int t = 0; t < 9; ++t) {
                const int rr = r + t / 3 - 1;
                const int cc = c + t % 3 - 1;
                if (rr < 0 || rr >= x.rows || cc < 0 || cc >= x.cols) {
                    continue;
                }
                cols.block(static_cast<Eigen::Index>(t) * channels, idx, channels, 1) = x.data.col(x.index(rr, cc));
            }
        }
    }
    return cols;
}

Tensor col2im(const Eigen::MatrixXd& dcols, int rows, int cols, int channels) {
    Tensor dx(rows, cols, channels);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const Eigen::Index idx = dx.index(r, c);
            for (int t = 0; t < 9; ++t) {
                const int rr = r + t / 3 - 1;
                const int cc = c + t % 3 - 1;
                if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) {
                    continue;
                }
                dx.data.col(dx.index(rr, cc)) += dcols.block(static_cast<Eigen::Index>(t) * channels, idx, channels, 1);
            }
        }
    }
    return dx;
}

Tensor conv_forward(const Conv3x3& conv, const Eigen::MatrixXd& cols, int rows, int ncols) {
    Tensor y;
    y.rows = rows;
    y.cols = ncols;
    y.data.noalias() = conv.weight * cols;
    y.data.colwise() += conv.bias;
    return y;
}

Tensor conv_backward(const Conv3x3& conv, Conv3x3& grad, const Eigen::MatrixXd& cols, const Tensor& dy) {
    grad.weight.noalias() += dy.data * cols.transpose();
    grad.bias += dy.data.rowwise().sum();
    const Eigen::MatrixXd dcols = conv.weight.transpose() * dy.data;
    return col2im(dcols, dy.rows, dy.cols, conv.in_channels());
}

void relu_inplace(Tensor& x) {
    x.data = x.data.cwiseMax(0.0);
}

void relu_backward_inplace(Tensor& dy, const Tensor& activated) {
    dy.data = (activated.data.array() > 0.0).select(dy.data, 0.0);
}

Tensor upsample2(const Tensor& x) {
    Tensor y(x.rows * 2, x.cols * 2, x.channels());
    for (int r = 0; r < y.rows; ++r) {
        for (int c = 0; c < y.cols; ++c) {
            y.cell(r, c) = x.cell(r / 2, c / 2);
        }
    }
    return y;
}

Tensor upsample2_backward(const Tensor& dy) {
    Tensor dx(dy.rows / 2, dy.cols / 2, dy.channels());
    for (int r = 0; r < dy.rows; ++r) {
        for (int c = 0; c < dy.cols; ++c) {
            dx.cell(r / 2, c / 2) += dy.cell(r, c);
        }
    }
    return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor y(a.rows, a.cols, a.channels() + b.channels());
    y.data.topRows(a.channels()) = a.data;
    y.data.bottomRows(b.channels()) = b.data;
    return y;
}

ScoreMap to_score_map(const Eigen::VectorXd& flat, int rows, int cols) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), rows,
                                                                                                   cols);
}

Eigen::VectorXd to_flat(const ScoreMap& map) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row_major = map;
    return Eigen::Map<const Eigen::VectorXd>(row_major.data(), row_major.size());
}

// ---- network forward / backward -------------------------------------------

enum class Normalization { Batch, Running };
enum class GateSource { Sample, Frozen, Ones };

struct ForwardSpec {
    Normalization normalization = Normalization::Batch;
    GateSource gate = GateSource::Sample;
    std::uint64_t seed = 0;
    const MaskSet* frozen = nullptr;
    bool decode = true;
    bool signature = false;
    NetParams* update_running = nullptr;
    double momentum = 0.1;
};

struct EncoderCache {
    PoolCache pool;
    Tensor normalized;
    Tensor activated;
    Eigen::MatrixXd cols;
    Tensor features;
    Eigen::VectorXd scores;
    Eigen::VectorXd gate;
    Tensor sparse;
};

struct DecoderCache {
    Eigen::MatrixXd up_cols;
    Tensor up_activated;
    Eigen::MatrixXd fuse_cols;
    Tensor fuse_out;
};

struct ImageCache {
    std::vector<EncoderCache> enc;
    std::vector<DecoderCache> dec;
    Tensor output;
};

struct BatchCache {
    std::vector<ImageCache> images;
    std::vector<Eigen::VectorXd> inv_std;  // per level, batch normalization
    MaskSet masks;
    LossReport report;
    std::uint64_t signature = 0;
};

Tensor decoder_forward(const std::vector<const Tensor*>& sparse, const NetParams& p, std::vector<DecoderCache>* cache,
                       Signature& sig) {
    const int n = p.levels();
    if (cache != nullptr) {
        cache->assign(static_cast<std::size_t>(n), {});
    }
    Tensor y = *sparse[static_cast<std::size_t>(n - 1)];
    for (int i = n; i >= 1; --i) {
        const auto& block = p.decoder[static_cast<std::size_t>(i - 1)];
        Tensor up = upsample2(y);
        Eigen::MatrixXd up_cols = im2col(up);
        Tensor a = conv_forward(block.up_conv, up_cols, up.rows, up.cols);
        relu_inplace(a);
        require_finite(a.data, level_name("decoder", i, "up_conv"));
        sig.mix_positive(a.data);

        Tensor s = i >= 2 ? concat_channels(a, *sparse[static_cast<std::size_t>(i - 2)]) : a;
        Eigen::MatrixXd fuse_cols = im2col(s);
        Tensor out = conv_forward(block.fuse_conv, fuse_cols, s.rows, s.cols);
        if (i >= 2) {
            relu_inplace(out);
            sig.mix_positive(out.data);
        }
        require_finite(out.data, level_name("decoder", i, "fuse_conv"));
        if (cache != nullptr) {
            auto& c = (*cache)[static_cast<std::size_t>(i - 1)];
            c.up_cols = std::move(up_cols);
            c.up_activated = a;
            c.fuse_cols = std::move(fuse_cols);
            c.fuse_out = out;
        }
        y = std::move(out);
    }
    return y;
}

BatchCache forward_batch(const TrainBatch& batch, const NetParams& p, const ForwardSpec& spec) {
    const int n = p.levels();
    const std::size_t count = batch.size();
    BatchCache cache;
    cache.images.resize(count);
    cache.masks.assign(count, std::vector<LevelGate>(static_cast<std::size_t>(n)));
    cache.inv_std.resize(static_cast<std::size_t>(n));
    Signature sig;
    sig.enabled = spec.signature;

    std::vector<const Tensor*> inputs(count);
    for (std::size_t k = 0; k < count; ++k) {
        inputs[k] = &batch[k];
        cache.images[k].enc.resize(static_cast<std::size_t>(n));
    }

    for (int i = 1; i <= n; ++i) {
        const std::size_t li = static_cast<std::size_t>(i - 1);
        const auto& block = p.encoder[li];
        const auto& level = p.config.levels[li];
        std::vector<Tensor> pooled(count);
        for (std::size_t k = 0; k < count; ++k) {
            pooled[k] = maxpool(*inputs[k], cache.images[k].enc[li].pool);
            if (sig.enabled) {
                for (const auto a : cache.images[k].enc[li].pool.argmax) {
                    sig.mix(static_cast<std::uint64_t>(a));
                }
            }
        }

        const int channels = pooled.front().channels();
        Eigen::VectorXd mean;
        Eigen::VectorXd inv_std;
        if (spec.normalization == Normalization::Batch) {
            double m = 0.0;
            mean = Eigen::VectorXd::Zero(channels);
            for (const auto& t : pooled) {
                mean += t.data.rowwise().sum();
                m += static_cast<double>(t.cells());
            }
            mean /= m;
            Eigen::VectorXd var = Eigen::VectorXd::Zero(channels);
            for (const auto& t : pooled) {
                var += (t.data.colwise() - mean).array().square().matrix().rowwise().sum();
            }
            var /= m;
            inv_std = (var.array() + kBnEps).rsqrt().matrix();
            if (spec.update_running != nullptr) {
                auto& bn = spec.update_running->encoder[li].norm;
                const double unbiased = m > 1.0 ? m / (m - 1.0) : 1.0;
                bn.running_mean = (1.0 - spec.momentum) * bn.running_mean + spec.momentum * mean;
                bn.running_var = (1.0 - spec.momentum) * bn.running_var + spec.momentum * unbiased * var;
            }
        } else {
            mean = block.norm.running_mean;
            inv_std = (block.norm.running_var.array() + kBnEps).rsqrt().matrix();
        }
        cache.inv_std[li] = inv_std;

        for (std::size_t k = 0; k < count; ++k) {
            auto& c = cache.images[k].enc[li];
            c.normalized = pooled[k];
            c.normalized.data = ((pooled[k].data.colwise() - mean).array().colwise() * inv_std.array()).matrix();
            c.activated = c.normalized;
            c.activated.data = (c.normalized.data.array().colwise() * block.norm.gamma.array()).matrix();
            c.activated.data.colwise() += block.norm.beta;
            relu_inplace(c.activated);
            sig.mix_positive(c.activated.data);
            require_finite(c.activated.data, level_name("encoder", i, "norm"));

            c.cols = im2col(c.activated);
            c.features = conv_forward(block.conv, c.cols, c.activated.rows, c.activated.cols);
            require_finite(c.features.data, level_name("encoder", i, "conv"));

            const Eigen::RowVectorXd logits = p.omega[li].transpose() * c.features.data;
            c.scores = logits.transpose().unaryExpr([](double z) { return pyramid::sigmoid(z); });

            LevelGate& gate = cache.masks[k][li];
            switch (spec.gate) {
                case GateSource::Sample: {
                    const ScoreMap sm = to_score_map(c.scores, c.features.rows, c.features.cols);
                    const std::uint64_t seed = splitmix64(spec.seed ^ splitmix64(k * 64u + li));
                    const auto mask = pyramid::sample_mask(sm, level, seed);
                    gate.bits = to_flat(mask.bits.cast<double>());
                    gate.anchor = c.scores;
                    break;
                }
                case GateSource::Frozen: {
                    const auto& frozen = (*spec.frozen)[k][li];
                    if (frozen.bits.size() != c.scores.size() || frozen.anchor.size() != c.scores.size()) {
                        throw InvalidArgument("frozen mask does not match level " + std::to_string(i));
                    }
                    gate = frozen;
                    break;
                }
                case GateSource::Ones:
                    gate.bits = Eigen::VectorXd::Ones(c.scores.size());
                    gate.anchor = c.scores;
                    break;
            }
            c.gate = gate.bits + (c.scores - gate.anchor);
            c.sparse = c.features;
            c.sparse.data = c.features.data * c.gate.asDiagonal();
            inputs[k] = &c.features;
        }
    }

    if (!spec.decode) {
        return cache;
    }

    std::vector<int> dims;
    for (const auto& l : p.config.levels) {
        dims.push_back(l.dim);
    }
    cache.report.keypoints_per_level.assign(static_cast<std::size_t>(n), 0.0);
    for (std::size_t k = 0; k < count; ++k) {
        auto& img = cache.images[k];
        std::vector<const Tensor*> sparse;
        for (const auto& e : img.enc) {
            sparse.push_back(&e.sparse);
        }
        img.output = decoder_forward(sparse, p, &img.dec, sig);
        if (sig.enabled) {
            const Eigen::MatrixXd residual = img.output.data - batch[k].data;
            for (Eigen::Index j = 0; j < residual.size(); ++j) {
                const double v = residual.data()[j];
                sig.mix(v > 0.0 ? 1u : (v < 0.0 ? 2u : 3u));
            }
        }
        std::vector<ScoreMap> scores;
        for (const auto& e : img.enc) {
            scores.push_back(to_score_map(e.scores, e.features.rows, e.features.cols));
        }
        const LossReport r = loss(batch[k], img.output, scores, dims, p.config.lambda, p.config.norm);
        cache.report.reconstruction += r.reconstruction / static_cast<double>(count);
        cache.report.compression += r.compression / static_cast<double>(count);
        for (int i = 0; i < n; ++i) {
            cache.report.keypoints_per_level[static_cast<std::size_t>(i)] +=
                cache.masks[k][static_cast<std::size_t>(i)].bits.sum() / static_cast<double>(count);
        }
    }
    cache.report.total = cache.report.reconstruction + p.config.lambda * cache.report.compression;
    cache.signature = sig.value;
    return cache;
}

Gradients backward_from_cache(const TrainBatch& batch, const NetParams& p, BatchCache&& cache) {
    const int n = p.levels();
    const std::size_t count = batch.size();
    const double inv_count = 1.0 / static_cast<double>(count);
    Gradients g;
    g.grads = zeros_like(p);

    // Decoder: per image, grads of every sparse level.
    std::vector<std::vector<Tensor>> dsparse(count, std::vector<Tensor>(static_cast<std::size_t>(n)));
    for (std::size_t k = 0; k < count; ++k) {
        auto& img = cache.images[k];
        for (int i = 1; i <= n; ++i) {
            const auto& e = img.enc[static_cast<std::size_t>(i - 1)];
            dsparse[k][static_cast<std::size_t>(i - 1)] = Tensor(e.sparse.rows, e.sparse.cols, e.sparse.channels());
        }
        Tensor dy = img.output;
        const Eigen::ArrayXXd residual = (img.output.data - batch[k].data).array();
        if (p.config.norm == ReconstructionNorm::L1) {
            dy.data = (residual.sign() * inv_count).matrix();
        } else {
            dy.data = (2.0 * inv_count * residual).matrix();
        }
        for (int i = 1; i <= n; ++i) {
            const auto& block = p.decoder[static_cast<std::size_t>(i - 1)];
            auto& gblock = g.grads.decoder[static_cast<std::size_t>(i - 1)];
            const auto& c = img.dec[static_cast<std::size_t>(i - 1)];
            if (i >= 2) {
                relu_backward_inplace(dy, c.fuse_out);
            }
            Tensor ds = conv_backward(block.fuse_conv, gblock.fuse_conv, c.fuse_cols, dy);
            Tensor da;
            if (i >= 2) {
                const int width = c.up_activated.channels();
                da = Tensor(ds.rows, ds.cols, width);
                da.data = ds.data.topRows(width);
                dsparse[k][static_cast<std::size_t>(i - 2)].data += ds.data.bottomRows(ds.channels() - width);
            } else {
                da = std::move(ds);
            }
            relu_backward_inplace(da, c.up_activated);
            Tensor dup = conv_backward(block.up_conv, gblock.up_conv, c.up_cols, da);
            dy = upsample2_backward(dup);
            require_finite(dy.data, level_name("decoder", i, "backward"));
        }
        dsparse[k][static_cast<std::size_t>(n - 1)].data += dy.data;
    }

    // Encoder, deep -> shallow.
    std::vector<Tensor> dfeatures(count);
    for (int i = n; i >= 1; --i) {
        const std::size_t li = static_cast<std::size_t>(i - 1);
        const auto& block = p.encoder[li];
        auto& gblock = g.grads.encoder[li];
        const double dim = static_cast<double>(p.config.levels[li].dim);
        std::vector<Tensor> dnorm_out(count);
        for (std::size_t k = 0; k < count; ++k) {
            const auto& c = cache.images[k].enc[li];
            Tensor df = dfeatures[k].data.size() == 0 ? Tensor(c.features.rows, c.features.cols, c.features.channels())
                                                      : std::move(dfeatures[k]);
            const Tensor& dsp = dsparse[k][li];
            // Straight-through: d gate / d p = 1.
            const Eigen::VectorXd dgate = c.features.data.cwiseProduct(dsp.data).colwise().sum().transpose();
            df.data += dsp.data * c.gate.asDiagonal();
            const Eigen::VectorXd dp = dgate.array() + p.config.lambda * dim * inv_count;
            const Eigen::VectorXd dz = (dp.array() * c.scores.array() * (1.0 - c.scores.array())).matrix();
            g.grads.omega[li] += c.features.data * dz;
            df.data += p.omega[li] * dz.transpose();
            require_finite(df.data, level_name("encoder", i, "features.backward"));

            Tensor dact = conv_backward(block.conv, gblock.conv, c.cols, df);
            relu_backward_inplace(dact, c.activated);
            dnorm_out[k] = std::move(dact);
        }

        const int channels = dnorm_out.front().channels();
        Eigen::VectorXd sum_dy = Eigen::VectorXd::Zero(channels);
        Eigen::VectorXd sum_dy_xhat = Eigen::VectorXd::Zero(channels);
        double m = 0.0;
        for (std::size_t k = 0; k < count; ++k) {
            const auto& c = cache.images[k].enc[li];
            sum_dy += dnorm_out[k].data.rowwise().sum();
            sum_dy_xhat += dnorm_out[k].data.cwiseProduct(c.normalized.data).rowwise().sum();
            m += static_cast<double>(dnorm_out[k].cells());
        }
        gblock.norm.gamma += sum_dy_xhat;
        gblock.norm.beta += sum_dy;
        const Eigen::ArrayXd gamma = block.norm.gamma.array();
        const Eigen::ArrayXd inv_std = cache.inv_std[li].array();
        const Eigen::ArrayXd sum_dxhat = sum_dy.array() * gamma;
        const Eigen::ArrayXd sum_dxhat_xhat = sum_dy_xhat.array() * gamma;
        for (std::size_t k = 0; k < count; ++k) {
            const auto& c = cache.images[k].enc[li];
            Tensor dpooled = dnorm_out[k];
            const Eigen::ArrayXXd dxhat = dnorm_out[k].data.array().colwise() * gamma;
            const Eigen::ArrayXXd centred =
                (m * dxhat).colwise() - sum_dxhat - c.normalized.data.array().colwise() * sum_dxhat_xhat;
            dpooled.data = (centred.colwise() * (inv_std / m)).matrix();
            require_finite(dpooled.data, level_name("encoder", i, "norm.backward"));
            if (i >= 2) {
                dfeatures[k] = maxpool_backward(dpooled, c.pool);
            }
        }
    }

    g.lambda_grad = cache.report.compression;
    g.report = std::move(cache.report);
    g.masks = std::move(cache.masks);
    return g;
}

void require_training_batch(const TrainBatch& batch, const NetParams& params) {
    validate_batch(batch, params);
}

Conv3x3 make_conv(int in, int out, std::mt19937_64& rng) {
    Conv3x3 conv;
    conv.weight.resize(out, 9 * in);
    conv.bias.resize(out);
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (9.0 * in)));
    for (Eigen::Index i = 0; i < conv.weight.size(); ++i) {
        conv.weight.data()[i] = normal(rng);
    }
    // Small non-zero biases keep decoder units fed by masked-out (zero) cells off the ReLU kink.
    std::normal_distribution<double> small(0.0, 0.05);
    for (Eigen::Index i = 0; i < out; ++i) {
        conv.bias[i] = small(rng);
    }
    return conv;
}

BatchNorm make_norm(int channels) {
    return {Eigen::VectorXd::Ones(channels), Eigen::VectorXd::Zero(channels), Eigen::VectorXd::Zero(channels),
            Eigen::VectorXd::Ones(channels)};
}

void check_conv(const Conv3x3& conv, int in, int out, const std::string& name) {
    if (conv.weight.rows() != out || conv.weight.cols() != 9 * in || conv.bias.size() != out) {
        throw InvalidArgument(name + ": expected " + std::to_string(in) + " -> " + std::to_string(out) + " channels");
    }
    if (!conv.weight.allFinite() || !conv.bias.allFinite()) {
        throw InvalidArgument(name + ": non-finite weights");
    }
}

void check_norm(const BatchNorm& bn, int channels, const std::string& name) {
    if (bn.gamma.size() != channels || bn.beta.size() != channels || bn.running_mean.size() != channels ||
        bn.running_var.size() != channels) {
        throw InvalidArgument(name + ": expected " + std::to_string(channels) + " channels");
    }
    if (!bn.gamma.allFinite() || !bn.beta.allFinite() || !bn.running_mean.allFinite() ||
        !bn.running_var.allFinite() || (bn.running_var.array() < 0.0).any()) {
        throw InvalidArgument(name + ": invalid values");
    }
}

}  // namespace

NetParams init_params(const NetConfig& config, std::uint64_t seed) {
    pyramid::validate_levels(config.levels);
    const int n = static_cast<int>(config.levels.size());
    if (config.image_channels <= 0) {
        throw InvalidArgument("image needs at least one channel");
    }
    if (static_cast<int>(config.decoder_widths.size()) != n) {
        throw InvalidArgument("decoder needs one width per level");
    }
    if (std::any_of(config.decoder_widths.begin(), config.decoder_widths.end(), [](int w) { return w <= 0; })) {
        throw InvalidArgument("decoder widths must be positive");
    }
    if (!(config.lambda >= 0.0) || !std::isfinite(config.lambda)) {
        throw InvalidArgument("lambda must be finite and non-negative");
    }
    std::mt19937_64 rng(seed);
    NetParams p;
    p.config = config;
    int in = config.image_channels;
    for (int i = 1; i <= n; ++i) {
        const int dim = config.levels[static_cast<std::size_t>(i - 1)].dim;
        p.encoder.push_back({make_norm(in), make_conv(in, dim, rng)});
        std::normal_distribution<double> normal(0.0, 0.1 / std::sqrt(static_cast<double>(dim)));
        Eigen::VectorXd omega(dim);
        for (int j = 0; j < dim; ++j) {
            omega[j] = normal(rng);
        }
        p.omega.push_back(omega);
        in = dim;
    }
    for (int i = 1; i <= n; ++i) {
        const auto w = config.decoder_widths;
        const int input = i == n ? config.levels.back().dim : w[static_cast<std::size_t>(i)];
        const int width = w[static_cast<std::size_t>(i - 1)];
        DecoderBlock block;
        block.up_conv = make_conv(input, width, rng);
        if (i >= 2) {
            block.fuse_conv = make_conv(width + config.levels[static_cast<std::size_t>(i - 2)].dim, width, rng);
        } else {
            block.fuse_conv = make_conv(width, config.image_channels, rng);
        }
        p.decoder.push_back(std::move(block));
    }
    return p;
}

NetParams zeros_like(const NetParams& params) {
    NetParams z = params;
    for (auto& e : z.encoder) {
        e.norm.gamma.setZero();
        e.norm.beta.setZero();
        e.norm.running_mean.setZero();
        e.norm.running_var.setZero();
        e.conv.weight.setZero();
        e.conv.bias.setZero();
    }
    for (auto& o : z.omega) {
        o.setZero();
    }
    for (auto& d : z.decoder) {
        d.up_conv.weight.setZero();
        d.up_conv.bias.setZero();
        d.fuse_conv.weight.setZero();
        d.fuse_conv.bias.setZero();
    }
    return z;
}

void validate(const NetParams& p) {
    const auto& cfg = p.config;
    pyramid::validate_levels(cfg.levels);
    const int n = p.levels();
    if (static_cast<int>(p.encoder.size()) != n || static_cast<int>(p.omega.size()) != n ||
        static_cast<int>(p.decoder.size()) != n || static_cast<int>(cfg.decoder_widths.size()) != n) {
        throw InvalidArgument("parameter blocks do not match level count");
    }
    if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) {
        throw InvalidArgument("lambda must be finite and non-negative");
    }
    int in = cfg.image_channels;
    for (int i = 1; i <= n; ++i) {
        const auto li = static_cast<std::size_t>(i - 1);
        const int dim = cfg.levels[li].dim;
        check_norm(p.encoder[li].norm, in, level_name("encoder", i, "norm"));
        check_conv(p.encoder[li].conv, in, dim, level_name("encoder", i, "conv"));
        if (p.omega[li].size() != dim || !p.omega[li].allFinite()) {
            throw InvalidArgument(level_name("omega", i, "") + " has wrong length or non-finite values");
        }
        in = dim;
    }
    for (int i = 1; i <= n; ++i) {
        const auto li = static_cast<std::size_t>(i - 1);
        const int input = i == n ? cfg.levels.back().dim : cfg.decoder_widths[li + 1];
        const int width = cfg.decoder_widths[li];
        check_conv(p.decoder[li].up_conv, input, width, level_name("decoder", i, "up_conv"));
        const int fuse_in = i >= 2 ? width + cfg.levels[li - 1].dim : width;
        const int fuse_out = i >= 2 ? width : cfg.image_channels;
        check_conv(p.decoder[li].fuse_conv, fuse_in, fuse_out, level_name("decoder", i, "fuse_conv"));
    }
}

std::vector<ParamView> trainable_parameters(NetParams& p) {
    std::vector<ParamView> views;
    auto add = [&views](std::string name, Eigen::MatrixXd& m) { views.push_back({std::move(name), m.data(), m.size()}); };
    auto addv = [&views](std::string name, Eigen::VectorXd& v) {
        views.push_back({std::move(name), v.data(), v.size()});
    };
    for (int i = 1; i <= p.levels(); ++i) {
        auto& e = p.encoder[static_cast<std::size_t>(i - 1)];
        addv(level_name("encoder", i, "norm.gamma"), e.norm.gamma);
        addv(level_name("encoder", i, "norm.beta"), e.norm.beta);
        add(level_name("encoder", i, "conv.weight"), e.conv.weight);
        addv(level_name("encoder", i, "conv.bias"), e.conv.bias);
        addv("omega." + std::to_string(i), p.omega[static_cast<std::size_t>(i - 1)]);
    }
    for (int i = 1; i <= p.levels(); ++i) {
        auto& d = p.decoder[static_cast<std::size_t>(i - 1)];
        add(level_name("decoder", i, "up_conv.weight"), d.up_conv.weight);
        addv(level_name("decoder", i, "up_conv.bias"), d.up_conv.bias);
        add(level_name("decoder", i, "fuse_conv.weight"), d.fuse_conv.weight);
        addv(level_name("decoder", i, "fuse_conv.bias"), d.fuse_conv.bias);
    }
    return views;
}

Eigen::Index parameter_count(const NetParams& params) {
    NetParams copy = params;
    Eigen::Index total = 0;
    for (const auto& v : trainable_parameters(copy)) {
        total += v.size;
    }
    return total;
}

void validate_batch(const TrainBatch& batch, const NetParams& params) {
    if (batch.empty()) {
        throw InvalidArgument("training batch is empty");
    }
    const int factor = 1 << params.levels();
    const auto& first = batch.front();
    for (const auto& img : batch) {
        if (!img.same_shape(first)) {
            throw InvalidArgument("batch images must share dimensions");
        }
        if (img.channels() != params.config.image_channels) {
            throw InvalidArgument("image channel count does not match the network");
        }
        if (!img.data.allFinite() || (img.data.array() < 0.0).any() || (img.data.array() > 1.0).any()) {
            throw InvalidArgument("image values must lie in [0, 1]");
        }
    }
    if (first.rows <= 0 || first.cols <= 0 || first.rows % factor != 0 || first.cols % factor != 0) {
        throw InvalidArgument("image dims must be positive multiples of " + std::to_string(factor));
    }
}

LossReport loss(const Tensor& image, const Tensor& reconstruction, std::span<const ScoreMap> scores,
                std::span<const int> dims, double lambda, ReconstructionNorm norm) {
    if (!image.same_shape(reconstruction)) {
        throw InvalidArgument("reconstruction shape does not match the image");
    }
    LossReport r;
    const auto diff = (image.data - reconstruction.data).array();
    r.reconstruction = norm == ReconstructionNorm::L1 ? diff.abs().sum() : diff.square().sum();
    r.compression = pyramid::compression_cost(scores, dims);
    r.total = r.reconstruction + lambda * r.compression;
    return r;
}

pyramid::DensePyramid encode(const Tensor& image, const NetParams& params) {
    const TrainBatch batch{image};
    validate_batch(batch, params);
    ForwardSpec spec;
    spec.normalization = Normalization::Running;
    spec.gate = GateSource::Ones;
    spec.decode = false;
    const BatchCache cache = forward_batch(batch, params, spec);
    pyramid::DensePyramid out;
    out.image_rows = image.rows;
    out.image_cols = image.cols;
    for (int i = 1; i <= params.levels(); ++i) {
        const auto& c = cache.images.front().enc[static_cast<std::size_t>(i - 1)];
        out.levels.push_back({params.config.levels[static_cast<std::size_t>(i - 1)], c.features,
                              to_score_map(c.scores, c.features.rows, c.features.cols)});
    }
    return out;
}

Tensor decode(const pyramid::SparsePyramid& sparse, const NetParams& params) {
    const int n = params.levels();
    if (static_cast<int>(sparse.levels.size()) != n) {
        throw InvalidArgument("sparse pyramid level count does not match the network");
    }
    std::vector<Tensor> dense;
    for (int i = 1; i <= n; ++i) {
        const auto& level = sparse.levels[static_cast<std::size_t>(i - 1)];
        const auto& spec = params.config.levels[static_cast<std::size_t>(i - 1)];
        if (level.level.index != spec.index || level.level.dim != spec.dim) {
            throw InvalidArgument("sparse level " + std::to_string(i) + " does not match the network");
        }
        if (i >= 2) {
            const auto& prev = dense.back();
            if (prev.rows != 2 * level.rows || prev.cols != 2 * level.cols) {
                throw InvalidArgument("sparse level " + std::to_string(i) + " has inconsistent grid size");
            }
        }
        dense.push_back(pyramid::densify(level, spec.dim));
    }
    std::vector<const Tensor*> ptrs;
    for (const auto& t : dense) {
        ptrs.push_back(&t);
    }
    Signature sig;
    return decoder_forward(ptrs, params, nullptr, sig);
}

Gradients backward(const TrainBatch& batch, const NetParams& params, std::uint64_t seed) {
    require_training_batch(batch, params);
    ForwardSpec spec;
    spec.seed = seed;
    return backward_from_cache(batch, params, forward_batch(batch, params, spec));
}

Gradients backward(const TrainBatch& batch, const NetParams& params, const MaskSet& masks) {
    require_training_batch(batch, params);
    if (masks.size() != batch.size()) {
        throw InvalidArgument("mask set does not match batch size");
    }
    ForwardSpec spec;
    spec.gate = GateSource::Frozen;
    spec.frozen = &masks;
    return backward_from_cache(batch, params, forward_batch(batch, params, spec));
}

LossReport evaluate_loss(const TrainBatch& batch, const NetParams& params, const MaskSet& masks) {
    require_training_batch(batch, params);
    ForwardSpec spec;
    spec.gate = GateSource::Frozen;
    spec.frozen = &masks;
    return forward_batch(batch, params, spec).report;
}

TrainResult train(const TrainBatch& batch, NetParams params, const TrainOptions& options) {
    if (options.steps < 1) {
        throw InvalidArgument("training needs at least one step");
    }
    require_training_batch(batch, params);
    validate(params);
    TrainResult result;
    result.trace.reserve(static_cast<std::size_t>(options.steps));
    for (int step = 0; step < options.steps; ++step) {
        ForwardSpec spec;
        spec.seed = splitmix64(options.seed + static_cast<std::uint64_t>(step));
        spec.update_running = &params;
        spec.momentum = options.running_momentum;
        Gradients g;
        try {
            // Running statistics are written into `params` during the forward pass,
            // which does not read them in batch-normalization mode.
            const NetParams snapshot = params;
            g = backward_from_cache(batch, snapshot, forward_batch(batch, snapshot, spec));
        } catch (const NumericError& e) {
            throw DivergenceError(e.what(), result.trace);
        }
        if (!std::isfinite(g.report.total)) {
            throw DivergenceError("non-finite loss at step " + std::to_string(step), result.trace);
        }
        result.trace.push_back(g.report);
        auto views = trainable_parameters(params);
        auto grads = trainable_parameters(g.grads);
        for (std::size_t v = 0; v < views.size(); ++v) {
            Eigen::Map<Eigen::VectorXd>(views[v].data, views[v].size) -=
                options.learning_rate * Eigen::Map<const Eigen::VectorXd>(grads[v].data, grads[v].size);
        }
    }
    result.params = std::move(params);
    return result;
}

std::vector<double> mean_kept_keypoints(const TrainBatch& batch, const NetParams& params, double tau) {
    std::vector<double> kept(static_cast<std::size_t>(params.levels()), 0.0);
    for (const auto& img : batch) {
        const auto pyr = encode(img, params);
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const auto mask = pyramid::threshold_mask(pyr.levels[i].scores, pyr.levels[i].level, tau);
            kept[i] += static_cast<double>(mask.count()) / static_cast<double>(batch.size());
        }
    }
    return kept;
}

GradCheckReport grad_check(const NetParams& params, const TrainBatch& batch, const GradCheckOptions& options) {
    require_training_batch(batch, params);
    validate(params);

    ForwardSpec sample;
    sample.seed = options.seed;
    sample.decode = false;
    const MaskSet masks = forward_batch(batch, params, sample).masks;

    Gradients analytic = backward(batch, params, masks);
    if (options.tamper) {
        options.tamper(analytic.grads);
    }

    ForwardSpec frozen;
    frozen.gate = GateSource::Frozen;
    frozen.frozen = &masks;
    frozen.signature = true;

    NetParams work = params;
    const std::uint64_t base_signature = forward_batch(batch, work, frozen).signature;
    auto views = trainable_parameters(work);
    auto grads = trainable_parameters(analytic.grads);

    GradCheckReport report;
    for (std::size_t v = 0; v < views.size(); ++v) {
        for (Eigen::Index j = 0; j < views[v].size; ++j) {
            double& value = views[v].data[j];
            const double original = value;
            value = original + options.epsilon;
            const BatchCache plus = forward_batch(batch, work, frozen);
            value = original - options.epsilon;
            const BatchCache minus = forward_batch(batch, work, frozen);
            value = original;

            const double numeric = (plus.report.total - minus.report.total) / (2.0 * options.epsilon);
            const double a = grads[v].data[j];
            const double scale = std::max({std::abs(a), std::abs(numeric), options.absolute_floor});
            const double err = std::abs(a - numeric) / scale;
            if (plus.signature != base_signature || minus.signature != base_signature) {
                ++report.skipped_at_kinks;
                continue;
            }
            ++report.checked;
            if (err > report.max_relative_error || report.worst_parameter.empty()) {
                report.max_relative_error = err;
                report.worst_parameter = views[v].name + "[" + std::to_string(j) + "]";
            }
        }
    }
    report.passed = report.max_relative_error < options.tolerance;
    return report;
}

}  // namespace sfp::autoencoder
