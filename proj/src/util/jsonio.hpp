#ifndef DREAMPAST_JSONIO_HPP
#define DREAMPAST_JSONIO_HPP

#include <json.hpp>

#include "util/common.hpp"

namespace dreampast {

using json = nlohmann::json;

inline json load_json(const fs::path& p) {
    auto buf = read_file(p);
    try {
        return json::parse(buf.begin(), buf.end());
    } catch (const json::parse_error& e) {
        throw RuntimeError(p.string() + ": " + e.what());
    }
}

// nlohmann keeps object keys sorted, so dumps are deterministic
inline void save_json(const fs::path& p, const json& j, int indent = 2) {
    std::string s = j.dump(indent);
    s.push_back('\n');
    write_file(p, s.data(), s.size());
}

}  // namespace dreampast

#endif
