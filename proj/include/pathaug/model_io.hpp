#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pathaug/colorspace.hpp"
#include "pathaug/error.hpp"
#include "pathaug/stainstats.hpp"

namespace pathaug {

inline constexpr const char* kModelFileVersion = "1";

struct SpaceModels {
    UnimodalStainModel unimodal;
    GmmStainModel gmm;

    friend bool operator==(const SpaceModels&, const SpaceModels&) = default;
};

/// Dataset-level statistics for all three color spaces plus the stain basis
/// used to compute the HED statistics.
struct StainModelFile {
    StainMatrix stain_matrix = StainMatrix::standard();
    double subsample_fraction = 1.0;
    std::int64_t image_count = 0;
    std::optional<std::uint64_t> seed;
    std::array<SpaceModels, 3> spaces; // indexed by ColorSpace

    const SpaceModels& at(ColorSpace s) const { return spaces[static_cast<std::size_t>(s)]; }
    SpaceModels& at(ColorSpace s) { return spaces[static_cast<std::size_t>(s)]; }

    friend bool operator==(const StainModelFile&, const StainModelFile&) = default;
};

namespace detail {

using nlohmann::json;

inline json to_json_array(const Vec6& v)
{
    json a = json::array();
    for (int i = 0; i < 6; ++i) a.push_back(v[i]);
    return a;
}

[[noreturn]] inline void schema_fail(const std::string& what) { throw Error(ErrorCode::SchemaError, what); }

inline const json& require(const json& obj, const char* key, const std::string& where)
{
    if (!obj.is_object() || !obj.contains(key)) schema_fail(where + ": missing \"" + key + "\"");
    return obj.at(key);
}

inline double require_number(const json& v, const std::string& where)
{
    if (!v.is_number()) schema_fail(where + ": expected a number");
    return v.get<double>();
}

template <std::size_t N>
std::array<double, N> require_reals(const json& v, const std::string& where)
{
    if (!v.is_array() || v.size() != N) schema_fail(where + ": expected " + std::to_string(N) + " numbers");
    std::array<double, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = require_number(v[i], where);
    return out;
}

inline std::string units_note(ColorSpace s)
{
    switch (s) {
    case ColorSpace::HSV: return "H,S,V scaled to [0,255]";
    case ColorSpace::LAB: return "L* x2.55, a*+128, b*+128";
    case ColorSpace::HED: return "raw optical density";
    }
    return "";
}

} // namespace detail

inline nlohmann::json model_to_json(const StainModelFile& file)
{
    using nlohmann::json;
    json root;
    root["version"] = kModelFileVersion;
    json sm = json::array();
    for (double v : file.stain_matrix.values()) sm.push_back(v);
    root["stain_matrix"] = sm;
    root["subsample_fraction"] = file.subsample_fraction;
    root["image_count"] = file.image_count;
    if (file.seed) root["seed"] = *file.seed;

    json units, spaces;
    for (auto s : kAllSpaces) {
        const auto& m = file.at(s);
        const std::string name(to_string(s));
        units[name] = detail::units_note(s);

        json uni;
        uni["mean"] = m.unimodal.mean;
        uni["std"] = m.unimodal.std;

        json gmm;
        gmm["k"] = m.gmm.k();
        gmm["weights"] = m.gmm.weights;
        json means = json::array(), covs = json::array();
        for (int c = 0; c < m.gmm.k(); ++c) {
            means.push_back(detail::to_json_array(m.gmm.means[c]));
            json cov = json::array();
            for (int r = 0; r < 6; ++r) cov.push_back(detail::to_json_array(m.gmm.covariances[c].row(r).transpose()));
            covs.push_back(cov);
        }
        gmm["means"] = means;
        gmm["covariances"] = covs;

        spaces[name] = json{{"unimodal", uni}, {"gmm", gmm}};
    }
    root["units"] = units;
    root["spaces"] = spaces;
    return root;
}

inline StainModelFile model_from_json(const nlohmann::json& root)
{
    using detail::require;
    using detail::schema_fail;

    if (!root.is_object()) schema_fail("model file: top level must be an object");
    const auto& version = require(root, "version", "model file");
    if (!version.is_string() || version.get<std::string>() != kModelFileVersion)
        schema_fail("model file: unsupported version " + version.dump());

    StainModelFile file;
    const auto sm = detail::require_reals<9>(require(root, "stain_matrix", "model file"), "stain_matrix");
    try {
        file.stain_matrix = StainMatrix::from_values(sm);
    } catch (const Error& e) {
        schema_fail(std::string("stain_matrix: ") + e.what());
    }
    file.subsample_fraction =
        detail::require_number(require(root, "subsample_fraction", "model file"), "subsample_fraction");
    const auto& count = require(root, "image_count", "model file");
    if (!count.is_number_integer()) schema_fail("image_count: expected an integer");
    file.image_count = count.get<std::int64_t>();
    if (root.contains("seed")) {
        if (!root["seed"].is_number_unsigned()) schema_fail("seed: expected an unsigned integer");
        file.seed = root["seed"].get<std::uint64_t>();
    }

    const auto& spaces = require(root, "spaces", "model file");
    for (auto s : kAllSpaces) {
        const std::string name(to_string(s));
        const auto& block = require(spaces, name.c_str(), "spaces");
        auto& m = file.at(s);

        const auto& uni = require(block, "unimodal", name);
        m.unimodal.space = s;
        m.unimodal.mean = detail::require_reals<6>(require(uni, "mean", name + ".unimodal"), name + ".unimodal.mean");
        m.unimodal.std = detail::require_reals<6>(require(uni, "std", name + ".unimodal"), name + ".unimodal.std");

        const auto& gmm = require(block, "gmm", name);
        const auto& kj = require(gmm, "k", name + ".gmm");
        if (!kj.is_number_integer() || kj.get<int>() < 1) schema_fail(name + ".gmm.k: expected a positive integer");
        const auto k = static_cast<std::size_t>(kj.get<int>());
        const auto& weights = require(gmm, "weights", name + ".gmm");
        const auto& means = require(gmm, "means", name + ".gmm");
        const auto& covs = require(gmm, "covariances", name + ".gmm");
        if (!weights.is_array() || weights.size() != k || !means.is_array() || means.size() != k ||
            !covs.is_array() || covs.size() != k)
            schema_fail(name + ".gmm: weights/means/covariances must each have k entries");
        m.gmm.space = s;
        for (std::size_t c = 0; c < k; ++c) {
            m.gmm.weights.push_back(detail::require_number(weights[c], name + ".gmm.weights"));
            const auto mu = detail::require_reals<6>(means[c], name + ".gmm.means");
            m.gmm.means.push_back(Eigen::Map<const Vec6>(mu.data()));
            if (!covs[c].is_array() || covs[c].size() != 6) schema_fail(name + ".gmm.covariances: expected 6x6");
            Mat6 cov;
            for (int r = 0; r < 6; ++r) {
                const auto row = detail::require_reals<6>(covs[c][r], name + ".gmm.covariances");
                for (int col = 0; col < 6; ++col) cov(r, col) = row[col];
            }
            m.gmm.covariances.push_back(cov);
        }
    }
    return file;
}

inline std::string model_to_string(const StainModelFile& file) { return model_to_json(file).dump(2) + "\n"; }

inline void save_model(const StainModelFile& file, const std::filesystem::path& path)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out << model_to_string(file);
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

inline StainModelFile load_model(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaError, path.string() + ": " + e.what());
    }
    return model_from_json(root);
}

} // namespace pathaug
