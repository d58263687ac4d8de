#ifndef DREAMPAST_CHECKPOINT_HPP
#define DREAMPAST_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "util/jsonio.hpp"

namespace dreampast {

// Checkpoint container: "DPST" magic, u32 format version, u64 header
// length, JSON header (kind, metadata, tensor directory), then raw
// little-endian float32 blobs. Deterministic byte output: sorted JSON
// keys, tensors laid out in add() order.
constexpr uint32_t kCkptFormatVersion = 1;

class CkptWriter {
  public:
    CkptWriter(std::string kind, json meta);

    void add(const std::string& name, std::vector<int64_t> shape, const double* data, size_t n);
    void write(const fs::path& p) const;

  private:
    std::string kind_;
    json meta_;
    json tensors_ = json::array();
    std::vector<uint8_t> blob_;
};

class CkptReader {
  public:
    explicit CkptReader(const fs::path& p);

    const std::string& kind() const { return kind_; }
    const json& meta() const { return meta_; }
    bool has(const std::string& name) const;
    std::vector<int64_t> shape(const std::string& name) const;
    size_t numel(const std::string& name) const;
    void read(const std::string& name, double* out, size_t n) const;
    std::vector<std::string> names() const;  // stored order

  private:
    const json& entry(const std::string& name) const;
    std::string kind_;
    json meta_;
    json tensors_;
    std::vector<uint8_t> blob_;
};

}  // namespace dreampast

#endif
