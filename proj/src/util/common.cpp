#include "util/common.hpp"

#include <cstdio>

namespace dreampast {

std::vector<uint8_t> read_file(const fs::path& p) {
    std::FILE* f = std::fopen(p.c_str(), "rb");
    if (!f) throw RuntimeError("cannot open " + p.string());
    std::fseek(f, 0, SEEK_END);
    long n = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> buf(n > 0 ? size_t(n) : 0);
    if (n > 0 && std::fread(buf.data(), 1, buf.size(), f) != buf.size()) {
        std::fclose(f);
        throw RuntimeError("short read on " + p.string());
    }
    std::fclose(f);
    return buf;
}

std::string read_text(const fs::path& p) {
    auto buf = read_file(p);
    return std::string(buf.begin(), buf.end());
}

void write_file(const fs::path& p, const std::string& text) {
    write_file(p, text.data(), text.size());
}

void write_file(const fs::path& p, const void* data, size_t n) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::FILE* f = std::fopen(p.c_str(), "wb");
    if (!f) throw RuntimeError("cannot write " + p.string());
    if (n && std::fwrite(data, 1, n, f) != n) {
        std::fclose(f);
        throw RuntimeError("short write on " + p.string());
    }
    std::fclose(f);
}

uint64_t fnv1a64(const void* data, size_t n) {
    const uint8_t* b = static_cast<const uint8_t*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t fnv1a64_file(const fs::path& p) {
    auto buf = read_file(p);
    return fnv1a64(buf.data(), buf.size());
}

std::string hex64(uint64_t v) {
    char s[17];
    std::snprintf(s, sizeof(s), "%016llx", static_cast<unsigned long long>(v));
    return s;
}

}  // namespace dreampast
