#include <limits>
#include <string>

#include "binary_io.hpp"
#include "sfp/error.hpp"
#include "sfp/map.hpp"

namespace sfp::map {

std::vector<std::uint8_t> serialize(const LandmarkMap& map) {
    map.validate();
    if (map.landmarks.size() > std::numeric_limits<std::uint32_t>::max() ||
        map.frames.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw InvalidArgument("map too large for the file format");
    }
    detail::ByteWriter w;
    w.bytes("SFPM");
    w.u16(kMapFormatVersion);
    w.u8(static_cast<std::uint8_t>(map.levels.size()));
    for (const auto& l : map.levels) {
        w.u16(static_cast<std::uint16_t>(l.dim));
    }
    w.u8(static_cast<std::uint8_t>(map.mode));
    w.u32(static_cast<std::uint32_t>(map.landmarks.size()));
    w.u32(static_cast<std::uint32_t>(map.frames.size()));
    for (const auto& lm : map.landmarks) {
        w.f32(lm.position.x());
        w.f32(lm.position.y());
        w.f32(lm.position.z());
        w.u8(static_cast<std::uint8_t>(lm.level));
        w.u8(lm.presence);
        for (Eigen::Index i = 0; i < lm.descriptor.size(); ++i) {
            w.f32(lm.descriptor(i));
        }
    }
    for (const auto& f : map.frames) {
        if (f.global.size() > 65535) {
            throw InvalidArgument("global descriptor too long for the file format");
        }
        w.u16(static_cast<std::uint16_t>(f.global.size()));
        for (Eigen::Index i = 0; i < f.global.size(); ++i) {
            w.f32(f.global(i));
        }
        w.u32(static_cast<std::uint32_t>(f.landmark_ids.size()));
        for (auto id : f.landmark_ids) {
            w.u32(id);
        }
    }
    return w.take();
}

LandmarkMap deserialize(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes, "map file");
    r.expect("SFPM");
    const auto version = r.u16();
    if (version != kMapFormatVersion) {
        throw FormatError("map file: unsupported version " + std::to_string(version));
    }
    LandmarkMap map;
    const int n_levels = r.u8();
    std::vector<int> dims;
    for (int i = 0; i < n_levels; ++i) {
        dims.push_back(r.u16());
    }
    try {
        map.levels = pyramid::make_levels(dims);
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("map file: bad level table: ") + e.what());
    }
    const auto mode = r.u8();
    if (mode > 1) {
        throw FormatError("map file: unknown descriptor mode " + std::to_string(mode));
    }
    map.mode = static_cast<DescriptorMode>(mode);
    const auto n_landmarks = r.u32();
    const auto n_frames = r.u32();
    r.need(static_cast<std::size_t>(n_landmarks) * 14 + static_cast<std::size_t>(n_frames) * 6);
    map.landmarks.resize(n_landmarks);
    const unsigned all = (1U << n_levels) - 1U;
    for (std::uint32_t k = 0; k < n_landmarks; ++k) {
        auto& lm = map.landmarks[k];
        const float x = r.f32();
        const float y = r.f32();
        const float z = r.f32();
        lm.position = Eigen::Vector3d(x, y, z);
        lm.level = r.u8();
        lm.presence = r.u8();
        if (lm.presence == 0 || (lm.presence & ~all) != 0) {
            throw FormatError("map file: landmark " + std::to_string(k) + " has a bad presence bitmap");
        }
        lm.descriptor.resize(map.descriptor_length(lm.presence));
        for (Eigen::Index i = 0; i < lm.descriptor.size(); ++i) {
            lm.descriptor(i) = r.f32();
        }
    }
    map.frames.resize(n_frames);
    for (auto& f : map.frames) {
        f.global.resize(r.u16());
        for (Eigen::Index i = 0; i < f.global.size(); ++i) {
            f.global(i) = r.f32();
        }
        const auto count = r.u32();
        r.need(static_cast<std::size_t>(count) * 4);
        f.landmark_ids.resize(count);
        for (auto& id : f.landmark_ids) {
            id = r.u32();
            if (id >= n_landmarks) {
                throw FormatError("map file: frame refers to landmark " + std::to_string(id) + " out of range");
            }
            map.landmarks[id].observations += 1;
        }
    }
    if (!r.done()) {
        throw FormatError("map file: trailing bytes");
    }
    try {
        map.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("map file: ") + e.what());
    }
    return map;
}

void save_map(const LandmarkMap& map, const std::filesystem::path& path) {
    detail::write_file(path, serialize(map));
}

LandmarkMap load_map(const std::filesystem::path& path) {
    return deserialize(detail::read_file(path));
}

namespace {

// volatile keeps GCC 11 at -O3 from vectorizing the round trip away
double to_f32(double v) {
    volatile float f = static_cast<float>(v);
    return f;
}

template <typename Vec>
void round_to_f32(Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = to_f32(v[i]);
}

}  // namespace

LandmarkMap to_storage_precision(const LandmarkMap& map) {
    LandmarkMap out = map;
    for (auto& lm : out.landmarks) {
        round_to_f32(lm.position);
        round_to_f32(lm.descriptor);
    }
    for (auto& f : out.frames) round_to_f32(f.global);
    return out;
}

}  // namespace sfp::map
