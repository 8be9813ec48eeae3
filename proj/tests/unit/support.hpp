#ifndef FEATURESCOPE_TESTS_SUPPORT_HPP
#define FEATURESCOPE_TESTS_SUPPORT_HPP

#include "featurescope/common.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <unistd.h>

namespace test_support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("featurescope-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// Directory produced by the fixtures setup test (FEATURESCOPE_FIXTURES).
inline std::filesystem::path fixtures_dir() {
    const char* env = std::getenv("FEATURESCOPE_FIXTURES");
    REQUIRE_MESSAGE(env != nullptr, "FEATURESCOPE_FIXTURES is not set");
    return env;
}

template <typename F>
featurescope::ErrorCode error_code_of(F&& f) {
    try {
        f();
    } catch (const featurescope::Error& e) {
        return e.code();
    }
    FAIL("expected a featurescope::Error");
    return featurescope::ErrorCode::data_error;
}

inline featurescope::MatrixF random_matrix(featurescope::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                           double scale = 1.0) {
    featurescope::MatrixF m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<float>(scale * rng.normal());
    return m;
}

}  // namespace test_support

#endif
