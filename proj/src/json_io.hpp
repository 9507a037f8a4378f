#pragma once

// Internal helpers for checkpoint (de)serialization.

#include "earlyrec/error.hpp"
#include "earlyrec/tensor.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace earlyrec::detail {

inline nlohmann::json to_json(const Mat& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

inline Mat mat_from_json(const nlohmann::json& j) {
    return Mat(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
               j.at("data").get<std::vector<double>>());
}

inline nlohmann::json to_json(const AffineLayer& a) {
    return {{"weight", to_json(a.weight)}, {"bias", a.bias.values()}};
}

inline AffineLayer affine_from_json(const nlohmann::json& j) {
    AffineLayer a(mat_from_json(j.at("weight")), Vec(j.at("bias").get<std::vector<double>>()));
    if (a.bias.dim() != a.weight.rows()) {
        throw FormatError("bias dim " + std::to_string(a.bias.dim()) + " does not match " +
                          std::to_string(a.weight.rows()) + " weight rows");
    }
    return a;
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << j.dump(1) << '\n';
    if (!out) {
        throw std::runtime_error("write failed for " + path.string());
    }
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open " + path.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace earlyrec::detail
