#include "kneeseg/kvol.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "kneeseg/errors.hpp"

namespace kneeseg {

namespace {

using nlohmann::json;

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "f32le") return 4;
    if (dtype == "u8") return 1;
    throw format_error("kvol: unknown dtype \"" + dtype + "\"");
}

void store_f32le(float v, unsigned char* out) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    out[0] = static_cast<unsigned char>(bits & 0xff);
    out[1] = static_cast<unsigned char>((bits >> 8) & 0xff);
    out[2] = static_cast<unsigned char>((bits >> 16) & 0xff);
    out[3] = static_cast<unsigned char>((bits >> 24) & 0xff);
}

float load_f32le(const unsigned char* in) {
    const std::uint32_t bits = static_cast<std::uint32_t>(in[0]) |
                               (static_cast<std::uint32_t>(in[1]) << 8) |
                               (static_cast<std::uint32_t>(in[2]) << 16) |
                               (static_cast<std::uint32_t>(in[3]) << 24);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void validate_header(const VolumeHeader& h) {
    if (h.magic != "KVOL") throw format_error("kvol: bad magic \"" + h.magic + "\"");
    if (h.version != 1)
        throw format_error("kvol: unsupported version " + std::to_string(h.version));
    dtype_size(h.dtype);
    if (h.order != "i1-fastest")
        throw format_error("kvol: unknown order \"" + h.order + "\"");
    if (h.kind == "volume") {
        if (h.dims.size() != 3) throw format_error("kvol: dims must have 3 entries for volume");
        if (h.dtype != "f32le") throw format_error("kvol: dtype must be f32le for volume");
    } else if (h.kind == "labels") {
        if (h.dims.size() != 3) throw format_error("kvol: dims must have 3 entries for labels");
        if (h.dtype != "u8") throw format_error("kvol: dtype must be u8 for labels");
        if (h.class_count < 2) throw format_error("kvol: class_count must be >= 2 for labels");
    } else if (h.kind == "probmap") {
        if (h.dims.size() != 4)
            throw format_error("kvol: dims must have 4 entries (C,I1,I2,I3) for probmap");
        if (h.dtype != "f32le") throw format_error("kvol: dtype must be f32le for probmap");
        if (h.dims[0] < 2) throw format_error("kvol: dims class count must be >= 2 for probmap");
    } else {
        throw format_error("kvol: unknown kind \"" + h.kind + "\"");
    }
    for (int d : h.dims)
        if (d <= 0) throw format_error("kvol: dims entries must be positive");
}

json header_to_json(const VolumeHeader& h) {
    json j;
    j["magic"] = h.magic;
    j["version"] = h.version;
    j["kind"] = h.kind;
    j["dims"] = h.dims;
    j["dtype"] = h.dtype;
    j["order"] = h.order;
    if (h.kind == "labels") j["class_count"] = h.class_count;
    return j;
}

VolumeHeader header_from_json(const json& j) {
    VolumeHeader h;
    try {
        h.magic = j.at("magic").get<std::string>();
        h.version = j.at("version").get<int>();
        h.kind = j.at("kind").get<std::string>();
        h.dims = j.at("dims").get<std::vector<int>>();
        h.dtype = j.at("dtype").get<std::string>();
        h.order = j.at("order").get<std::string>();
        if (j.contains("class_count")) h.class_count = j.at("class_count").get<int>();
    } catch (const json::exception& e) {
        throw format_error(std::string("kvol: malformed header: ") + e.what());
    }
    return h;
}

}  // namespace

std::size_t VolumeHeader::payload_bytes() const {
    std::size_t n = dtype_size(dtype);
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

std::string kvol_base(const std::string& path) {
    for (const char* ext : {".json", ".bin"}) {
        const std::size_t len = std::strlen(ext);
        if (path.size() > len && path.compare(path.size() - len, len, ext) == 0)
            return path.substr(0, path.size() - len);
    }
    return path;
}

VolumeHeader read_kvol_header(const std::string& base) {
    const std::string hpath = base + ".json";
    std::ifstream in(hpath);
    if (!in) throw format_error("kvol: cannot open header " + hpath);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw format_error("kvol: invalid JSON in " + hpath + ": " + e.what());
    }
    VolumeHeader h = header_from_json(j);
    validate_header(h);
    return h;
}

void write_kvol(const std::string& base, const VolumeHeader& header,
                const std::vector<unsigned char>& payload) {
    validate_header(header);
    if (payload.size() != header.payload_bytes())
        throw format_error("kvol: payload length " + std::to_string(payload.size()) +
                           " does not match dims (expected " +
                           std::to_string(header.payload_bytes()) + ")");
    {
        std::ofstream out(base + ".json");
        if (!out) throw format_error("kvol: cannot write " + base + ".json");
        out << header_to_json(header).dump(2) << '\n';
    }
    std::ofstream out(base + ".bin", std::ios::binary);
    if (!out) throw format_error("kvol: cannot write " + base + ".bin");
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size()));
    if (!out) throw format_error("kvol: short write to " + base + ".bin");
}

std::pair<VolumeHeader, std::vector<unsigned char>> read_kvol(const std::string& base) {
    VolumeHeader h = read_kvol_header(base);
    const std::string bpath = base + ".bin";
    std::ifstream in(bpath, std::ios::binary | std::ios::ate);
    if (!in) throw format_error("kvol: cannot open payload " + bpath);
    const auto actual = static_cast<std::size_t>(in.tellg());
    if (actual != h.payload_bytes())
        throw format_error("kvol: payload length " + std::to_string(actual) +
                           " does not match dims (expected " +
                           std::to_string(h.payload_bytes()) + ")");
    std::vector<unsigned char> payload(actual);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(actual));
    if (!in) throw format_error("kvol: short read from " + bpath);
    return {std::move(h), std::move(payload)};
}

void write_volume(const std::string& base, const DenseTensor3& v) {
    VolumeHeader h;
    h.kind = "volume";
    h.dims = {v.dims[0], v.dims[1], v.dims[2]};
    h.dtype = "f32le";
    std::vector<unsigned char> payload(v.data.size() * 4);
    for (size_t i = 0; i < v.data.size(); ++i)
        store_f32le(static_cast<float>(v.data[i]), payload.data() + 4 * i);
    write_kvol(base, h, payload);
}

DenseTensor3 read_volume(const std::string& base) {
    auto [h, payload] = read_kvol(base);
    if (h.kind != "volume")
        throw format_error("kvol: expected kind volume, found \"" + h.kind + "\"");
    DenseTensor3 v(h.dims[0], h.dims[1], h.dims[2]);
    for (size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = static_cast<double>(load_f32le(payload.data() + 4 * i));
    return v;
}

void write_labels(const std::string& base, const LabelVolume& v) {
    VolumeHeader h;
    h.kind = "labels";
    h.dims = {v.dims[0], v.dims[1], v.dims[2]};
    h.dtype = "u8";
    h.class_count = v.class_count;
    std::vector<unsigned char> payload(v.labels.begin(), v.labels.end());
    write_kvol(base, h, payload);
}

LabelVolume read_labels(const std::string& base) {
    auto [h, payload] = read_kvol(base);
    if (h.kind != "labels")
        throw format_error("kvol: expected kind labels, found \"" + h.kind + "\"");
    LabelVolume v(h.dims[0], h.dims[1], h.dims[2], h.class_count);
    std::copy(payload.begin(), payload.end(), v.labels.begin());
    for (std::uint8_t l : v.labels)
        if (l >= v.class_count)
            throw format_error("kvol: label value exceeds class_count");
    return v;
}

void write_probmap(const std::string& base, const ProbVolume& v) {
    VolumeHeader h;
    h.kind = "probmap";
    h.dims = {v.class_count, v.dims[0], v.dims[1], v.dims[2]};
    h.dtype = "f32le";
    std::vector<unsigned char> payload(v.data.size() * 4);
    for (size_t i = 0; i < v.data.size(); ++i)
        store_f32le(static_cast<float>(v.data[i]), payload.data() + 4 * i);
    write_kvol(base, h, payload);
}

ProbVolume read_probmap(const std::string& base) {
    auto [h, payload] = read_kvol(base);
    if (h.kind != "probmap")
        throw format_error("kvol: expected kind probmap, found \"" + h.kind + "\"");
    ProbVolume v(h.dims[1], h.dims[2], h.dims[3], h.dims[0]);
    for (size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = static_cast<double>(load_f32le(payload.data() + 4 * i));
    return v;
}

void quantize_f32(std::vector<double>& data) {
    for (double& v : data) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace kneeseg
