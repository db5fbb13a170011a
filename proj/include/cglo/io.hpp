#pragma once

// File formats: PNG images, JSON annotations and patch manifests, binary
// checkpoints, CSV exports.

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cglo/fixture.hpp"
#include "cglo/generator.hpp"
#include "cglo/synthesis.hpp"
#include "cglo/tensor.hpp"
#include "cglo/trainer.hpp"

namespace cglo::io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Images

inline Real pixel_to_real(std::uint8_t u) { return 2.0 * static_cast<Real>(u) / 255.0 - 1.0; }

/// Inverse of pixel_to_real, rounding half away from zero and clamping.
inline std::uint8_t real_to_pixel(Real v) {
    const Real u = std::round((v + 1.0) * 255.0 / 2.0);
    return static_cast<std::uint8_t>(std::clamp(u, 0.0, 255.0));
}

/// Reads an 8-bit grayscale or RGB PNG as a CxHxW tensor in [-1, 1].
inline Tensor decode_image(const fs::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
    }
    const auto format = image.format;
    if (format != PNG_FORMAT_GRAY && format != PNG_FORMAT_RGB) {
        png_image_free(&image);
        throw FormatError("unsupported PNG '" + path.string() + "': only 8-bit grayscale or RGB without alpha");
    }
    const std::size_t channels = format == PNG_FORMAT_RGB ? 3 : 1;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
    }
    const std::size_t h = image.height, w = image.width;
    Tensor t({channels, h, w});
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) t.at(c, y, x) = pixel_to_real(buf[(y * w + x) * channels + c]);
        }
    }
    return t;
}

inline void encode_image(const Tensor& t, const fs::path& path) {
    if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3)) {
        throw ShapeError("encode_image: expected 1xHxW or 3xHxW, got " + shape_str(t.shape()));
    }
    const std::size_t channels = t.dim(0), h = t.dim(1), w = t.dim(2);
    std::vector<std::uint8_t> buf(channels * h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) buf[(y * w + x) * channels + c] = real_to_pixel(t.at(c, y, x));
        }
    }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
    }
}

// ---------------------------------------------------------------------------
// Annotations: a JSON array of scene records
//   [{"id": "...", "image": "rel/path.png", "width": W, "height": H,
//     "boxes": [{"x": .., "y": .., "w": .., "h": .., "label": ".."}]}]

struct SceneRecord {
    std::string id;
    std::string image;
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<BoundingBox> boxes;

    friend bool operator==(const SceneRecord&, const SceneRecord&) = default;
};

using AnnotationFile = std::vector<SceneRecord>;

inline nlohmann::json to_json(const AnnotationFile& file) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : file) {
        nlohmann::json boxes = nlohmann::json::array();
        for (const auto& b : s.boxes) boxes.push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"label", b.label}});
        arr.push_back({{"id", s.id}, {"image", s.image}, {"width", s.width}, {"height", s.height}, {"boxes", boxes}});
    }
    return arr;
}

inline AnnotationFile annotations_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw FormatError("annotations: top level must be an array of scene records");
    AnnotationFile out;
    try {
        for (const auto& s : j) {
            SceneRecord r;
            r.id = s.at("id").get<std::string>();
            r.image = s.at("image").get<std::string>();
            r.width = s.at("width").get<std::size_t>();
            r.height = s.at("height").get<std::size_t>();
            for (const auto& b : s.at("boxes")) {
                BoundingBox box{b.at("x").get<Real>(), b.at("y").get<Real>(), b.at("w").get<Real>(), b.at("h").get<Real>(),
                                b.at("label").get<std::string>()};
                if (!box_inside(box, r.height, r.width)) {
                    throw FormatError("annotations: box " + detail::box_str(box) + " outside scene '" + r.id + "'");
                }
                r.boxes.push_back(std::move(box));
            }
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("annotations: ") + e.what());
    }
    return out;
}

inline std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
}

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(what + ": " + e.what());
    }
}

inline AnnotationFile load_annotations(const fs::path& path) {
    return annotations_from_json(parse_json(read_text(path), "annotations '" + path.string() + "'"));
}

inline void save_annotations(const AnnotationFile& file, const fs::path& path) {
    write_text(path, to_json(file).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Patch dataset manifest
//   {"root": ".", "patch_size": S, "channels": C,
//    "samples": [{"path": "patches/p0000.png", "label": 0}, ...]}
// Paths are relative to the manifest's directory joined with "root".

struct ManifestEntry {
    std::string path;
    int label = 0;
};

struct PatchDatasetManifest {
    std::string root = ".";
    std::size_t patch_size = 0;
    std::size_t channels = 1;
    std::vector<ManifestEntry> samples;
};

inline void save_manifest(const PatchDatasetManifest& m, const fs::path& path) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : m.samples) samples.push_back({{"path", s.path}, {"label", s.label}});
    nlohmann::json j{{"root", m.root}, {"patch_size", m.patch_size}, {"channels", m.channels}, {"samples", samples}};
    write_text(path, j.dump(2) + "\n");
}

inline PatchDatasetManifest parse_manifest(const fs::path& path) {
    const auto j = parse_json(read_text(path), "manifest '" + path.string() + "'");
    PatchDatasetManifest m;
    try {
        m.root = j.value("root", std::string("."));
        m.patch_size = j.at("patch_size").get<std::size_t>();
        m.channels = j.value("channels", std::size_t{1});
        for (const auto& s : j.at("samples")) {
            ManifestEntry e{s.at("path").get<std::string>(), s.at("label").get<int>()};
            if (e.label != 0 && e.label != 1) {
                throw FormatError("manifest: sample '" + e.path + "' has label " + std::to_string(e.label) + ", expected 0 or 1");
            }
            m.samples.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    return m;
}

struct PatchDataset {
    std::vector<Tensor> patches;
    std::vector<Condition> labels;
};

/// Loads every manifest entry, checking that it decodes to the declared size.
inline PatchDataset load_dataset(const fs::path& manifest_path) {
    const auto m = parse_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path() / m.root;
    const Shape expected{m.channels, m.patch_size, m.patch_size};
    PatchDataset ds;
    for (const auto& s : m.samples) {
        Tensor t = decode_image(base / s.path);
        if (t.shape() != expected) {
            throw ShapeError("manifest: '" + s.path + "' decodes to " + shape_str(t.shape()) + ", declared " + shape_str(expected));
        }
        ds.patches.push_back(std::move(t));
        ds.labels.push_back(Condition(static_cast<Real>(s.label)));
    }
    return ds;
}

/// Writes the fixture as PNG patches + manifest.json and PNG scenes +
/// annotations.json under `dir`.
inline PatchDatasetManifest write_fixture(const Fixture& fx, const fs::path& dir) {
    PatchDatasetManifest m;
    m.patch_size = fx.patches.empty() ? 0 : fx.patches.front().dim(1);
    m.channels = fx.patches.empty() ? 1 : fx.patches.front().dim(0);
    for (std::size_t i = 0; i < fx.patches.size(); ++i) {
        std::ostringstream name;
        name << "patches/p" << std::setw(5) << std::setfill('0') << i << ".png";
        encode_image(fx.patches[i], dir / name.str());
        m.samples.push_back({name.str(), fx.labels[i].is_foreground() ? 1 : 0});
    }
    save_manifest(m, dir / "manifest.json");

    AnnotationFile ann;
    for (const auto& s : fx.scenes) {
        const std::string rel = "scenes/" + s.scene.source_id + ".png";
        encode_image(s.scene.pixels, dir / rel);
        ann.push_back({s.scene.source_id, rel, s.scene.width(), s.scene.height(), s.boxes});
    }
    save_annotations(ann, dir / "annotations.json");
    return m;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Little-endian binary:
//   "CGLOCKPT" u32 version
//   config: u64 latent_dim cond_dim output_size channels base_feat seed
//   u64 n_tensors, each: u64 name_len, name, u64 rank, u64 dims[rank], f64 data
//   u64 n_entries, each: u64 sample_id, f64 condition, u64 d, f64 z[d]
//   u64 n_epochs, f64 loss[n_epochs]
//   u64 FNV-1a checksum of everything before it

inline constexpr char kCheckpointMagic[8] = {'C', 'G', 'L', 'O', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    GeneratorParams params;
    LatentTable table;
    LossHistory history;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    template <class T>
    void put(T v) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    void reals(std::span<const Real> v) { bytes(v.data(), v.size() * sizeof(Real)); }
    std::vector<std::uint8_t>& buffer() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t n) : data_(data), n_(n) {}

    template <class T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    std::uint64_t count(std::uint64_t elem_size) {
        const auto n = get<std::uint64_t>();
        if (elem_size && n > (n_ - pos_) / elem_size) throw FormatError("checkpoint: corrupt length field");
        return n;
    }
    void reals(std::span<Real> out) { std::memcpy(out.data(), take(out.size() * sizeof(Real)), out.size() * sizeof(Real)); }
    std::string str(std::size_t len) {
        const auto* p = take(len);
        return std::string(reinterpret_cast<const char*>(p), len);
    }
    bool done() const { return pos_ == n_; }

private:
    const std::uint8_t* take(std::size_t k) {
        if (k > n_ - pos_) throw FormatError("checkpoint: truncated file");
        const auto* p = data_ + pos_;
        pos_ += k;
        return p;
    }

    const std::uint8_t* data_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
    detail::Writer w;
    w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.put<std::uint32_t>(kCheckpointVersion);
    const auto& c = ck.params.config;
    for (std::uint64_t v : {std::uint64_t{c.latent_dim}, std::uint64_t{c.cond_dim}, std::uint64_t{c.output_size},
                            std::uint64_t{c.channels}, std::uint64_t{c.base_feat}, c.seed}) {
        w.put<std::uint64_t>(v);
    }
    w.put<std::uint64_t>(ck.params.tensors.size());
    for (const auto& [name, t] : ck.params.tensors) {
        w.put<std::uint64_t>(name.size());
        w.bytes(name.data(), name.size());
        w.put<std::uint64_t>(t.rank());
        for (auto d : t.shape()) w.put<std::uint64_t>(d);
        w.reals(t.data());
    }
    w.put<std::uint64_t>(ck.table.size());
    for (const auto& e : ck.table.entries) {
        w.put<std::uint64_t>(e.sample_id);
        w.put<Real>(e.c.value());
        w.put<std::uint64_t>(e.z.size());
        w.reals(e.z.values);
    }
    w.put<std::uint64_t>(ck.history.mean_loss.size());
    w.reals(ck.history.mean_loss);
    w.put<std::uint64_t>(detail::fnv1a(w.buffer().data(), w.buffer().size()));
    return std::move(w.buffer());
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
    constexpr std::size_t header = sizeof(kCheckpointMagic) + sizeof(std::uint32_t);
    if (bytes.size() < header || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw FormatError("checkpoint: missing magic header (not a checkpoint or truncated)");
    }
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + sizeof(kCheckpointMagic), sizeof(version));
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint: format version " + std::to_string(version) + ", this build reads version " +
                           std::to_string(kCheckpointVersion));
    }
    if (bytes.size() < header + sizeof(std::uint64_t)) throw FormatError("checkpoint: truncated file");
    const std::size_t body = bytes.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, sizeof(stored));
    if (stored != detail::fnv1a(bytes.data(), body)) throw FormatError("checkpoint: checksum mismatch (corrupt or truncated)");

    detail::Reader r(bytes.data() + header, body - header);
    Checkpoint ck;
    auto& c = ck.params.config;
    c.latent_dim = r.get<std::uint64_t>();
    c.cond_dim = r.get<std::uint64_t>();
    c.output_size = r.get<std::uint64_t>();
    c.channels = r.get<std::uint64_t>();
    c.base_feat = r.get<std::uint64_t>();
    c.seed = r.get<std::uint64_t>();

    const auto n_tensors = r.count(1);
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        std::string name = r.str(r.count(1));
        Shape shape(r.count(sizeof(std::uint64_t)));
        std::size_t total = 1;
        for (auto& d : shape) {
            d = r.get<std::uint64_t>();
            if (d == 0 || total > std::numeric_limits<std::size_t>::max() / d) throw FormatError("checkpoint: bad tensor shape");
            total *= d;
        }
        if (total > bytes.size() / sizeof(Real)) throw FormatError("checkpoint: bad tensor shape");
        Tensor t(shape);
        r.reals(t.data());
        ck.params.tensors.add(std::move(name), std::move(t));
    }
    const auto n_entries = r.count(1);
    for (std::uint64_t i = 0; i < n_entries; ++i) {
        LatentEntry e;
        e.sample_id = r.get<std::uint64_t>();
        const Real label = r.get<Real>();
        if (label != 0.0 && label != 1.0) throw FormatError("checkpoint: condition label is not 0 or 1");
        e.c = Condition(label);
        e.z.values.resize(r.count(sizeof(Real)));
        r.reals(e.z.values);
        ck.table.entries.push_back(std::move(e));
    }
    ck.history.mean_loss.resize(r.count(sizeof(Real)));
    r.reals(ck.history.mean_loss);
    if (!r.done()) throw FormatError("checkpoint: trailing bytes");
    try {
        validate_params(ck.params);
    } catch (const Error& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return ck;
}

/// Writes to a temporary sibling and renames, so readers never see a partial file.
inline void save_checkpoint(const Checkpoint& ck, const fs::path& path) {
    const auto bytes = serialize_checkpoint(ck);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write on checkpoint '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

/// `<run>/ckpt-<epoch>`
inline fs::path checkpoint_path(const fs::path& run_dir, std::size_t epoch) {
    return run_dir / ("ckpt-" + std::to_string(epoch));
}

// ---------------------------------------------------------------------------
// CSV exports

inline std::string format_real(Real v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

inline std::string loss_history_csv(const LossHistory& h) {
    std::string s = "epoch,mean_loss\n";
    for (std::size_t i = 0; i < h.mean_loss.size(); ++i) s += std::to_string(i + 1) + "," + format_real(h.mean_loss[i]) + "\n";
    return s;
}

inline std::string augment_report_header() { return "scene_id,box_index,x,y,side,inversion_loss,status\n"; }

inline std::string augment_report_rows(const std::string& scene_id, const std::vector<PlacementReport>& rows) {
    std::string s;
    for (const auto& r : rows) {
        s += scene_id + "," + std::to_string(r.box_index) + "," + format_real(r.box.x) + "," + format_real(r.box.y) + "," +
             format_real(r.box.w) + "," + format_real(r.inversion_loss) + "," + to_string(r.status) + "\n";
    }
    return s;
}

}  // namespace cglo::io
