#pragma once

#include <string>
#include <vector>

#include "kneeseg/metrics.hpp"
#include "kneeseg/tensor.hpp"

namespace kneeseg {

/// KVOL: a JSON header at <base>.json plus a raw little-endian payload at
/// <base>.bin. Element order is i1-fastest; probmaps store the class as
/// the slowest axis and carry it as the leading entry of dims.
/// Kinds and dtypes: volume/f32le, labels/u8, probmap/f32le.
struct VolumeHeader {
    std::string magic = "KVOL";
    int version = 1;
    std::string kind;        // "volume" | "labels" | "probmap"
    std::vector<int> dims;   // [I1,I2,I3]; probmap: [C,I1,I2,I3]
    std::string dtype;       // "f32le" | "u8"
    std::string order = "i1-fastest";
    int class_count = 0;     // labels only

    std::size_t payload_bytes() const;
};

/// Strips a trailing ".json" or ".bin" so either file name addresses the pair.
std::string kvol_base(const std::string& path);

VolumeHeader read_kvol_header(const std::string& base);

void write_kvol(const std::string& base, const VolumeHeader& header,
                const std::vector<unsigned char>& payload);
std::pair<VolumeHeader, std::vector<unsigned char>> read_kvol(const std::string& base);

void write_volume(const std::string& base, const DenseTensor3& v);
DenseTensor3 read_volume(const std::string& base);

void write_labels(const std::string& base, const LabelVolume& v);
LabelVolume read_labels(const std::string& base);

void write_probmap(const std::string& base, const ProbVolume& v);
ProbVolume read_probmap(const std::string& base);

/// double -> f32 -> double, the quantization every persisted real-valued
/// artifact goes through. Applying it in-memory keeps later stages
/// consistent with what a reader of the file would see.
void quantize_f32(std::vector<double>& data);

}  // namespace kneeseg
