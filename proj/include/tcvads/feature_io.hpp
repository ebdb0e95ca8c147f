#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcvads/matrix.hpp"

namespace tcvads {

// Feature container, little-endian throughout:
//
//   offset 0   magic "VFEA" (4 bytes)
//   offset 4   version  u32 (currently 1)
//   offset 8   n        u32 (rows / frames)
//   offset 12  d        u32 (columns / feature dim)
//   offset 16  payload  n * d float32, row-major
//
// Values are narrowed to float32 on write and widened back on read, so a
// write/read/write cycle reproduces the file byte for byte.
void write_feature_file(const std::string& path, const Matrix& features);
Matrix read_feature_file(const std::string& path);

// Little-endian primitive serialization shared by the feature and checkpoint
// containers. Buffers in memory; file IO happens once at save/load.
class BinaryWriter {
public:
    void u32(uint32_t v);
    void u64(uint64_t v);
    void f32(float v);
    void f64(double v);
    void f64_vec(const std::vector<double>& v);   // length-prefixed (u32)
    void str(const std::string& s);               // length-prefixed (u32)
    void raw(const void* p, size_t n);
    void save(const std::string& path) const;
    const std::vector<unsigned char>& bytes() const { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::vector<unsigned char> bytes, std::string source);
    static BinaryReader from_file(const std::string& path);

    uint32_t u32();
    uint64_t u64();
    float f32();
    double f64();
    std::vector<double> f64_vec();
    std::string str();
    void raw(void* p, size_t n);
    void expect_magic(const char magic[4]);
    void expect_end();
    size_t offset() const { return pos_; }

private:
    void need(size_t n);
    std::vector<unsigned char> buf_;
    size_t pos_ = 0;
    std::string source_;
};

// Checkpoint container: magic "TCVT", version u32, section tag u32, then the
// section's dims and float64 parameters in declared field order. Section tags
// keep the three model kinds from being confused for one another.
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr uint32_t kSectionTeacher = 1;
inline constexpr uint32_t kSectionStudent = 2;
inline constexpr uint32_t kSectionFine = 3;

BinaryWriter checkpoint_writer(uint32_t section_tag);
// Returns a reader positioned after the header; throws if the tag mismatches.
BinaryReader open_checkpoint(const std::string& path, uint32_t expected_section);

}  // namespace tcvads
