#ifndef DREAMPAST_COMMON_HPP
#define DREAMPAST_COMMON_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace dreampast {

namespace fs = std::filesystem;

// bad input from the user (CLI exit code 2)
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// anything that went wrong at runtime (CLI exit code 1)
struct RuntimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<uint8_t> read_file(const fs::path& p);
std::string read_text(const fs::path& p);
void write_file(const fs::path& p, const void* data, size_t n);
void write_file(const fs::path& p, const std::string& text);

// FNV-1a over raw bytes; used for cheap content-equality checks in run state
uint64_t fnv1a64(const void* data, size_t n);
uint64_t fnv1a64_file(const fs::path& p);
std::string hex64(uint64_t v);

}  // namespace dreampast

#endif
