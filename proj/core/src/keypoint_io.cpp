#include <limits>
#include <string>

#include "binary_io.hpp"
#include "sfp/error.hpp"
#include "sfp/features.hpp"

namespace sfp::features {

std::vector<std::uint8_t> serialize_keypoints(std::span<const Keypoint> keypoints) {
    if (keypoints.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw InvalidArgument("too many keypoints for one file");
    }
    detail::ByteWriter w;
    w.bytes("SFPK");
    w.u16(kKeypointFormatVersion);
    w.u32(static_cast<std::uint32_t>(keypoints.size()));
    for (const auto& kp : keypoints) {
        if (kp.level < 0 || kp.level > 255 || kp.descriptor.size() > 65535) {
            throw InvalidArgument("keypoint level or descriptor length out of range");
        }
        w.u8(static_cast<std::uint8_t>(kp.level));
        w.f32(kp.x);
        w.f32(kp.y);
        w.f32(kp.score);
        w.u16(static_cast<std::uint16_t>(kp.descriptor.size()));
        for (Eigen::Index i = 0; i < kp.descriptor.size(); ++i) {
            w.f32(kp.descriptor(i));
        }
    }
    return w.take();
}

std::vector<Keypoint> deserialize_keypoints(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "keypoint file");
    r.expect("SFPK");
    const auto version = r.u16();
    if (version != kKeypointFormatVersion) {
        throw FormatError("keypoint file: unsupported version " + std::to_string(version));
    }
    const auto count = r.u32();
    // Smallest record is 15 bytes; reject absurd counts before allocating.
    r.need(static_cast<std::size_t>(count) * 15);
    std::vector<Keypoint> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Keypoint kp;
        kp.level = r.u8();
        kp.x = r.f32();
        kp.y = r.f32();
        kp.score = r.f32();
        const auto dim = r.u16();
        kp.descriptor.resize(dim);
        for (int j = 0; j < dim; ++j) {
            kp.descriptor(j) = r.f32();
        }
        out.push_back(std::move(kp));
    }
    if (!r.done()) {
        throw FormatError("keypoint file: trailing bytes");
    }
    return out;
}

void save_keypoints(std::span<const Keypoint> keypoints, const std::filesystem::path& path) {
    detail::write_file(path, serialize_keypoints(keypoints));
}

std::vector<Keypoint> load_keypoints(const std::filesystem::path& path) {
    return deserialize_keypoints(detail::read_file(path));
}

}  // namespace sfp::features
