#include "sfp/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace sfp::autoencoder {
namespace {

using nlohmann::json;

json to_json(const Eigen::MatrixXd& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

json to_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::MatrixXd matrix_from(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
        throw FormatError("checkpoint matrix has inconsistent size");
    }
    return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

Eigen::VectorXd vector_from(const json& j) {
    const auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json conv_json(const Conv3x3& c) {
    return json{{"weight", to_json(c.weight)}, {"bias", to_json(c.bias)}};
}

Conv3x3 conv_from(const json& j) {
    return {matrix_from(j.at("weight")), vector_from(j.at("bias"))};
}

}  // namespace

std::string checkpoint_to_string(const NetParams& p) {
    json levels = json::array();
    for (const auto& l : p.config.levels) {
        levels.push_back({{"index", l.index}, {"stride", l.stride}, {"dim", l.dim}});
    }
    json encoder = json::array();
    for (const auto& e : p.encoder) {
        encoder.push_back({{"gamma", to_json(e.norm.gamma)},
                           {"beta", to_json(e.norm.beta)},
                           {"running_mean", to_json(e.norm.running_mean)},
                           {"running_var", to_json(e.norm.running_var)},
                           {"conv", conv_json(e.conv)}});
    }
    json omega = json::array();
    for (const auto& o : p.omega) {
        omega.push_back(to_json(o));
    }
    json decoder = json::array();
    for (const auto& d : p.decoder) {
        decoder.push_back({{"up_conv", conv_json(d.up_conv)}, {"fuse_conv", conv_json(d.fuse_conv)}});
    }
    const json doc{{"format", "sfp-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"levels", levels},
                   {"image_channels", p.config.image_channels},
                   {"decoder_widths", p.config.decoder_widths},
                   {"lambda", p.config.lambda},
                   {"norm", p.config.norm == ReconstructionNorm::L1 ? "l1" : "l2"},
                   {"encoder", encoder},
                   {"omega", omega},
                   {"decoder", decoder}};
    return doc.dump();
}

NetParams checkpoint_from_string(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "sfp-checkpoint") {
            throw FormatError("not an sfp checkpoint");
        }
        const int version = doc.at("version").get<int>();
        if (version != kCheckpointVersion) {
            throw FormatError("unsupported checkpoint version " + std::to_string(version));
        }
        NetParams p;
        p.config.levels.clear();
        for (const auto& l : doc.at("levels")) {
            p.config.levels.push_back({l.at("index").get<int>(), l.at("stride").get<int>(), l.at("dim").get<int>()});
        }
        p.config.image_channels = doc.at("image_channels").get<int>();
        p.config.decoder_widths = doc.at("decoder_widths").get<std::vector<int>>();
        p.config.lambda = doc.at("lambda").get<double>();
        const auto norm = doc.at("norm").get<std::string>();
        if (norm != "l1" && norm != "l2") {
            throw FormatError("unknown reconstruction norm '" + norm + "'");
        }
        p.config.norm = norm == "l1" ? ReconstructionNorm::L1 : ReconstructionNorm::L2;
        for (const auto& e : doc.at("encoder")) {
            EncoderBlock block;
            block.norm = {vector_from(e.at("gamma")), vector_from(e.at("beta")), vector_from(e.at("running_mean")),
                          vector_from(e.at("running_var"))};
            block.conv = conv_from(e.at("conv"));
            p.encoder.push_back(std::move(block));
        }
        for (const auto& o : doc.at("omega")) {
            p.omega.push_back(vector_from(o));
        }
        for (const auto& d : doc.at("decoder")) {
            p.decoder.push_back({conv_from(d.at("up_conv")), conv_from(d.at("fuse_conv"))});
        }
        try {
            validate(p);
        } catch (const InvalidArgument& e) {
            throw FormatError(std::string("checkpoint shapes are inconsistent: ") + e.what());
        }
        return p;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const NetParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << checkpoint_to_string(params);
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

NetParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_string(ss.str());
}

}  // namespace sfp::autoencoder
