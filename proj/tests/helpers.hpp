#pragma once

#include "earlyrec/rng.hpp"
#include "earlyrec/tensor.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

namespace testing {

inline earlyrec::Vec random_vec(std::size_t n, earlyrec::Rng& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    earlyrec::Vec v(n);
    for (auto& x : v) {
        x = u(rng);
    }
    return v;
}

inline earlyrec::Vec random_probs(std::size_t n, earlyrec::Rng& rng) {
    return earlyrec::softmax(random_vec(n, rng, 2.0));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("earlyrec_" + tag + "_" + std::to_string(std::random_device{}()));
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

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace testing
