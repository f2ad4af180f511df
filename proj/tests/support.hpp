#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

namespace test {

    inline std::filesystem::path temp_dir(const std::string& name)
    {
        auto dir = std::filesystem::temp_directory_path() / ("mle_test_" + name);
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        return dir;
    }

    inline std::string read_file(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    inline void write_file(const std::filesystem::path& path, const std::string& text)
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << text;
    }

    inline bool updating_golden() { return std::getenv("MLE_UPDATE_GOLDEN") != nullptr; }

    /// Compare against a frozen golden file; write it instead when
    /// MLE_UPDATE_GOLDEN is set or the file does not exist yet.
    inline void expect_golden(const std::string& name, const std::string& actual)
    {
        const auto path = std::filesystem::path(MLE_GOLDEN_DIR) / name;
        if (updating_golden() || !std::filesystem::exists(path)) {
            write_file(path, actual);
            GTEST_SKIP() << "wrote golden file " << path;
        }
        EXPECT_EQ(read_file(path), actual) << "golden mismatch: " << path;
    }

} // namespace test
