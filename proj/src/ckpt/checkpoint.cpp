#include "ckpt/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "util/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

namespace dreampast {

CkptWriter::CkptWriter(std::string kind, json meta)
    : kind_(std::move(kind)), meta_(std::move(meta)) {}

void CkptWriter::add(const std::string& name, std::vector<int64_t> shape,
                     const double* data, size_t n) {
    size_t expect = 1;
    for (int64_t d : shape) expect *= size_t(d);
    if (expect != n) throw RuntimeError("tensor shape does not match element count: " + name);
    json t{{"name", name}, {"shape", shape}, {"dtype", "f32"},
           {"offset", blob_.size()}, {"numel", n}};
    tensors_.push_back(std::move(t));
    size_t pos = blob_.size();
    blob_.resize(pos + n * 4);
    for (size_t i = 0; i < n; ++i) {
        float f = float(data[i]);
        std::memcpy(blob_.data() + pos + i * 4, &f, 4);
    }
}

void CkptWriter::write(const fs::path& p) const {
    json header{{"kind", kind_}, {"meta", meta_}, {"tensors", tensors_}};
    std::string hs = header.dump();
    std::vector<uint8_t> out;
    out.reserve(16 + hs.size() + blob_.size());
    const char magic[4] = {'D', 'P', 'S', 'T'};
    out.insert(out.end(), magic, magic + 4);
    uint32_t ver = kCkptFormatVersion;
    uint64_t hlen = hs.size();
    out.insert(out.end(), reinterpret_cast<uint8_t*>(&ver), reinterpret_cast<uint8_t*>(&ver) + 4);
    out.insert(out.end(), reinterpret_cast<uint8_t*>(&hlen), reinterpret_cast<uint8_t*>(&hlen) + 8);
    out.insert(out.end(), hs.begin(), hs.end());
    out.insert(out.end(), blob_.begin(), blob_.end());
    write_file(p, out.data(), out.size());
}

CkptReader::CkptReader(const fs::path& p) {
    auto buf = read_file(p);
    if (buf.size() < 16 || std::memcmp(buf.data(), "DPST", 4) != 0)
        throw RuntimeError("not a checkpoint file: " + p.string());
    uint32_t ver;
    uint64_t hlen;
    std::memcpy(&ver, buf.data() + 4, 4);
    std::memcpy(&hlen, buf.data() + 8, 8);
    if (ver != kCkptFormatVersion)
        throw RuntimeError("unsupported checkpoint version in " + p.string());
    if (16 + hlen > buf.size()) throw RuntimeError("truncated checkpoint: " + p.string());
    json header = json::parse(buf.begin() + 16, buf.begin() + 16 + hlen);
    kind_ = header.at("kind").get<std::string>();
    meta_ = header.at("meta");
    tensors_ = header.at("tensors");
    blob_.assign(buf.begin() + 16 + hlen, buf.end());
}

const json& CkptReader::entry(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.at("name").get<std::string>() == name) return t;
    throw RuntimeError("checkpoint has no tensor '" + name + "'");
}

bool CkptReader::has(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.at("name").get<std::string>() == name) return true;
    return false;
}

std::vector<int64_t> CkptReader::shape(const std::string& name) const {
    return entry(name).at("shape").get<std::vector<int64_t>>();
}

size_t CkptReader::numel(const std::string& name) const {
    return entry(name).at("numel").get<size_t>();
}

void CkptReader::read(const std::string& name, double* out, size_t n) const {
    const json& t = entry(name);
    size_t numel = t.at("numel").get<size_t>();
    size_t offset = t.at("offset").get<size_t>();
    if (numel != n) throw RuntimeError("tensor size mismatch reading '" + name + "'");
    if (offset + numel * 4 > blob_.size()) throw RuntimeError("tensor out of bounds: " + name);
    for (size_t i = 0; i < n; ++i) {
        float f;
        std::memcpy(&f, blob_.data() + offset + i * 4, 4);
        out[i] = double(f);
    }
}

std::vector<std::string> CkptReader::names() const {
    std::vector<std::string> out;
    for (const auto& t : tensors_) out.push_back(t.at("name").get<std::string>());
    return out;
}

}  // namespace dreampast
