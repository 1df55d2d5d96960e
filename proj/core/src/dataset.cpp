#include "sfp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include "sfp/error.hpp"

namespace sfp::dataset {

std::string frame_stem(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame-%06d", index);
    return buf;
}

std::vector<SequenceFrame> list_sequence(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError(dir.string() + " is not a directory");
    }
    static const std::regex color_re(R"(frame-(\d+)\.color\.(png|pgm|ppm))");
    std::vector<SequenceFrame> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        std::smatch m;
        if (!std::regex_match(name, m, color_re)) continue;
        SequenceFrame f;
        f.index = std::stoi(m[1].str());
        f.color = entry.path();
        const std::string stem = "frame-" + m[1].str();
        f.pose = dir / (stem + ".pose.txt");
        if (!std::filesystem::exists(f.pose)) continue;
        for (const char* ext : {".depth.png", ".depth.pgm"}) {
            if (std::filesystem::exists(dir / (stem + ext))) {
                f.depth = dir / (stem + ext);
                break;
            }
        }
        out.push_back(std::move(f));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    return out;
}

geometry::Pose read_pose_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    Eigen::Matrix4d M;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            if (!(in >> M(r, c))) {
                throw FormatError(path.string() + ": expected 16 numbers");
            }
        }
    }
    if (!M.allFinite()) {
        throw FormatError(path.string() + ": non-finite pose");
    }
    geometry::Pose world_from_camera{geometry::orthonormalize(M.topLeftCorner<3, 3>()), M.topRightCorner<3, 1>()};
    return world_from_camera.inverse();
}

void write_pose_file(const std::filesystem::path& path, const geometry::Pose& pose) {
    const geometry::Pose w = pose.inverse();
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << std::setprecision(17);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            const double v = r < 3 ? (c < 3 ? w.R(r, c) : w.t(r)) : (c == 3 ? 1.0 : 0.0);
            out << v << (c == 3 ? '\n' : '\t');
        }
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

namespace {

struct PnmHeader {
    char kind = 0;
    int cols = 0;
    int rows = 0;
    int maxval = 0;
};

PnmHeader read_header(std::istream& in, const std::string& name) {
    std::string magic;
    in >> magic;
    if (magic != "P5" && magic != "P6") {
        throw FormatError(name + ": only binary P5/P6 netpbm is supported");
    }
    PnmHeader h;
    h.kind = magic[1];
    int* fields[] = {&h.cols, &h.rows, &h.maxval};
    for (int* f : fields) {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string comment;
            std::getline(in, comment);
            in >> std::ws;
        }
        if (!(in >> *f)) {
            throw FormatError(name + ": bad header");
        }
    }
    in.get();  // single whitespace before the raster
    if (h.cols <= 0 || h.rows <= 0 || h.maxval <= 0 || h.maxval > 65535) {
        throw FormatError(name + ": bad dimensions or maxval");
    }
    return h;
}

std::vector<std::uint16_t> read_samples(std::istream& in, const PnmHeader& h, int channels, const std::string& name) {
    const std::size_t n = static_cast<std::size_t>(h.rows) * h.cols * channels;
    const int width = h.maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(n * width);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw FormatError(name + ": truncated raster");
    }
    std::vector<std::uint16_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = width == 2 ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
    }
    return out;
}

}  // namespace

Tensor read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const auto h = read_header(in, path.string());
    const int channels = h.kind == '5' ? 1 : 3;
    const auto samples = read_samples(in, h, channels, path.string());
    Tensor t(h.rows, h.cols, channels);
    std::size_t i = 0;
    for (int r = 0; r < h.rows; ++r) {
        for (int c = 0; c < h.cols; ++c) {
            for (int ch = 0; ch < channels; ++ch) {
                t.at(r, c, ch) = static_cast<double>(samples[i++]) / h.maxval;
            }
        }
    }
    return t;
}

std::vector<std::uint16_t> read_pgm16(const std::filesystem::path& path, int& rows, int& cols) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const auto h = read_header(in, path.string());
    if (h.kind != '5') {
        throw FormatError(path.string() + ": depth maps must be single-channel P5");
    }
    rows = h.rows;
    cols = h.cols;
    return read_samples(in, h, 1, path.string());
}

void write_pnm(const std::filesystem::path& path, const Tensor& image) {
    const int channels = image.channels();
    if (channels != 1 && channels != 3) {
        throw InvalidArgument("netpbm output needs one or three channels");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << (channels == 1 ? "P5" : "P6") << '\n' << image.cols << ' ' << image.rows << "\n255\n";
    for (int r = 0; r < image.rows; ++r) {
        for (int c = 0; c < image.cols; ++c) {
            for (int ch = 0; ch < channels; ++ch) {
                const double v = std::clamp(image.at(r, c, ch), 0.0, 1.0);
                out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
            }
        }
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

Tensor to_gray(const Tensor& image) {
    Tensor g(image.rows, image.cols, 1);
    g.data.row(0) = image.data.colwise().mean();
    return g;
}

}  // namespace sfp::dataset
