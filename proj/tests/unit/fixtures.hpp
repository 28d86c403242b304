#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

inline std::filesystem::path fixture_dir() { return MPISENTINEL_FIXTURE_DIR; }

inline std::string read_text(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Every .ll file under tests/fixtures/ir, sorted.
inline std::vector<std::filesystem::path> all_ir_fixtures() {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::recursive_directory_iterator(fixture_dir() / "ir"))
        if (e.is_regular_file() && e.path().extension() == ".ll") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mpisentinel_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
