#include "relnet/ntsr.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace relnet {

namespace {

constexpr char kMagic[4] = {'N', 'T', 'S', 'R'};
constexpr uint8_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(out, v);
}

class Reader {
 public:
  Reader(std::string data, std::string path)
      : data_(std::move(data)), path_(std::move(path)) {}

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(data_[pos_++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(static_cast<uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  void need(size_t n) const {
    if (pos_ + n > data_.size())
      throw IoError("truncated NTSR container: " + path_ + " (need " +
                    std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                    ", have " + std::to_string(data_.size() - pos_) + ")");
  }

 private:
  std::string data_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void ntsr_write(const std::string& path, const NtsrEntries& entries) {
  std::string out;
  out.append(kMagic, 4);
  out.push_back(static_cast<char>(kVersion));
  put_u32(out, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    out.push_back(static_cast<char>(t.rank()));
    for (int64_t d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
    for (int64_t i = 0; i < t.size(); ++i)
      put_f32(out, static_cast<float>(t.at(i)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

NtsrEntries ntsr_read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open NTSR container: " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);

  const std::string magic = r.bytes(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0)
    throw IoError("bad NTSR magic in " + path);
  const uint8_t version = r.u8();
  if (version != kVersion)
    throw IoError("unsupported NTSR version " + std::to_string(version) + " in " +
                  path);
  const uint32_t count = r.u32();

  NtsrEntries entries;
  entries.reserve(count);
  for (uint32_t e = 0; e < count; ++e) {
    const uint32_t name_len = r.u32();
    std::string name = r.bytes(name_len);
    const uint8_t rank = r.u8();
    std::vector<int64_t> shape(rank);
    int64_t total = 1;
    for (uint8_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int64_t>(r.u32());
      total *= shape[i];
    }
    Tensor t = Tensor::zeros(shape, DType::f32);
    float* p = t.data<float>();
    for (int64_t i = 0; i < total; ++i) p[i] = r.f32();
    entries.emplace_back(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw IoError("trailing bytes after NTSR entries in " + path);
  return entries;
}

}  // namespace relnet
