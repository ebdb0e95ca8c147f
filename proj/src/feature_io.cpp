#include "tcvads/feature_io.hpp"

#include <cstring>
#include <fstream>
#include <limits>

#include "tcvads/errors.hpp"

namespace tcvads {

namespace {

constexpr uint32_t kFeatureVersion = 1;
const char kFeatureMagic[4] = {'V', 'F', 'E', 'A'};
const char kCheckpointMagic[4] = {'T', 'C', 'V', 'T'};

}  // namespace

void BinaryWriter::u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void BinaryWriter::u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void BinaryWriter::f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

void BinaryWriter::f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
}

void BinaryWriter::f64_vec(const std::vector<double>& v) {
    u32(static_cast<uint32_t>(v.size()));
    for (double x : v) f64(x);
}

void BinaryWriter::str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
}

void BinaryWriter::raw(const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
}

void BinaryWriter::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw validation_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    if (!out) throw validation_error("write failed: " + path);
}

BinaryReader::BinaryReader(std::vector<unsigned char> bytes, std::string source)
    : buf_(std::move(bytes)), source_(std::move(source)) {}

BinaryReader BinaryReader::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw validation_error("cannot open: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return BinaryReader(std::move(bytes), path);
}

void BinaryReader::need(size_t n) {
    if (pos_ + n > buf_.size())
        throw validation_error(source_ + ": truncated at offset " + std::to_string(pos_) +
                               " (need " + std::to_string(n) + " bytes, have " +
                               std::to_string(buf_.size() - pos_) + ")");
}

uint32_t BinaryReader::u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

uint64_t BinaryReader::u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
}

float BinaryReader::f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

double BinaryReader::f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

std::vector<double> BinaryReader::f64_vec() {
    uint32_t n = u32();
    std::vector<double> v(n);
    for (uint32_t i = 0; i < n; ++i) v[i] = f64();
    return v;
}

std::string BinaryReader::str() {
    uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
}

void BinaryReader::raw(void* p, size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
}

void BinaryReader::expect_magic(const char magic[4]) {
    if (pos_ + 4 > buf_.size() || std::memcmp(buf_.data() + pos_, magic, 4) != 0)
        throw validation_error(source_ + ": bad magic at offset " + std::to_string(pos_) +
                               " (expected \"" + std::string(magic, 4) + "\")");
    pos_ += 4;
}

void BinaryReader::expect_end() {
    if (pos_ != buf_.size())
        throw validation_error(source_ + ": trailing bytes at offset " + std::to_string(pos_));
}

void write_feature_file(const std::string& path, const Matrix& features) {
    if (features.rows == 0 || features.cols == 0)
        throw validation_error("write_feature_file: empty matrix");
    if (features.rows > std::numeric_limits<uint32_t>::max() ||
        features.cols > std::numeric_limits<uint32_t>::max())
        throw validation_error("write_feature_file: dimensions exceed u32");
    BinaryWriter w;
    w.raw(kFeatureMagic, 4);
    w.u32(kFeatureVersion);
    w.u32(static_cast<uint32_t>(features.rows));
    w.u32(static_cast<uint32_t>(features.cols));
    for (double x : features.data) w.f32(static_cast<float>(x));
    w.save(path);
}

Matrix read_feature_file(const std::string& path) {
    BinaryReader r = BinaryReader::from_file(path);
    r.expect_magic(kFeatureMagic);
    uint32_t version = r.u32();
    if (version != kFeatureVersion)
        throw validation_error(path + ": unsupported feature version " + std::to_string(version));
    uint32_t n = r.u32();
    uint32_t d = r.u32();
    if (n == 0 || d == 0) throw validation_error(path + ": empty feature matrix");
    Matrix m(n, d);
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<double>(r.f32());
    r.expect_end();
    return m;
}

BinaryWriter checkpoint_writer(uint32_t section_tag) {
    BinaryWriter w;
    w.raw(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(section_tag);
    return w;
}

BinaryReader open_checkpoint(const std::string& path, uint32_t expected_section) {
    BinaryReader r = BinaryReader::from_file(path);
    r.expect_magic(kCheckpointMagic);
    uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw validation_error(path + ": unsupported checkpoint version " +
                               std::to_string(version));
    uint32_t tag = r.u32();
    if (tag != expected_section)
        throw validation_error(path + ": checkpoint section " + std::to_string(tag) +
                               " does not match expected " + std::to_string(expected_section));
    return r;
}

}  // namespace tcvads
