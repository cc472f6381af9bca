#include <fstream>

#include <gtest/gtest.h>

#include "pathaug/model_io.hpp"
#include "synthetic.hpp"

using namespace pathaug;
using pathaug::testing::TempDir;

namespace {

StainModelFile random_model(std::uint64_t seed, int k)
{
    Rng rng(seed);
    StainModelFile f;
    f.subsample_fraction = 0.1;
    f.image_count = 1234;
    f.seed = seed;
    for (auto s : kAllSpaces) {
        auto& m = f.at(s);
        m.unimodal.space = s;
        m.gmm.space = s;
        for (int v = 0; v < 6; ++v) {
            m.unimodal.mean[v] = rng.uniform(0, 255) / 3.0;
            m.unimodal.std[v] = rng.uniform(0, 10) / 7.0;
        }
        double wsum = 0;
        for (int c = 0; c < k; ++c) {
            m.gmm.weights.push_back(rng.uniform(0.1, 1.0));
            wsum += m.gmm.weights.back();
            Vec6 mean;
            Mat6 a;
            for (int i = 0; i < 6; ++i) {
                mean[i] = rng.normal() * 100.0 / 3.0;
                for (int j = 0; j < 6; ++j) a(i, j) = rng.normal() / 3.0;
            }
            m.gmm.means.push_back(mean);
            m.gmm.covariances.push_back(a * a.transpose() + 1e-6 * Mat6::Identity());
        }
        for (auto& w : m.gmm.weights) w /= wsum;
    }
    return f;
}

nlohmann::json model_json(const StainModelFile& f) { return model_to_json(f); }

void expect_schema_error(const nlohmann::json& j)
{
    try {
        model_from_json(j);
        FAIL() << "expected SchemaError";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaError) << e.what();
    }
}

} // namespace

TEST(ModelIo, RoundTripIsExact)
{
    TempDir dir("model");
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto f = random_model(seed, 10);
        save_model(f, dir / "m.json");
        const auto g = load_model(dir / "m.json");
        EXPECT_TRUE(f == g) << "seed " << seed;
        EXPECT_EQ(g.seed, f.seed);
    }
}

TEST(ModelIo, SchemaLayout)
{
    const auto j = model_json(random_model(4, 3));
    EXPECT_EQ(j["version"], "1");
    EXPECT_EQ(j["stain_matrix"].size(), 9u);
    EXPECT_EQ(j["image_count"], 1234);
    for (const char* s : {"HSV", "LAB", "HED"}) {
        const auto& g = j["spaces"][s]["gmm"];
        EXPECT_EQ(g["k"], 3);
        EXPECT_EQ(g["weights"].size(), 3u);
        EXPECT_EQ(g["means"][0].size(), 6u);
        EXPECT_EQ(g["covariances"][0].size(), 6u);
        EXPECT_EQ(g["covariances"][0][5].size(), 6u);
        EXPECT_EQ(j["spaces"][s]["unimodal"]["mean"].size(), 6u);
    }
}

TEST(ModelIo, MissingSpaceIsSchemaError)
{
    auto j = model_json(random_model(5, 2));
    j["spaces"].erase("HED");
    expect_schema_error(j);
}

TEST(ModelIo, UnknownVersionIsSchemaError)
{
    auto j = model_json(random_model(5, 2));
    j["version"] = "2";
    expect_schema_error(j);
}

TEST(ModelIo, MalformedBlocksAreSchemaErrors)
{
    auto base = model_json(random_model(6, 2));
    auto j = base;
    j["spaces"]["LAB"]["gmm"]["k"] = 3; // disagrees with array lengths
    expect_schema_error(j);
    j = base;
    j["spaces"]["HSV"]["unimodal"]["mean"] = {1, 2, 3};
    expect_schema_error(j);
    j = base;
    j["stain_matrix"] = {1, 0, 0, 2, 0, 0, 0, 0, 1};
    expect_schema_error(j);
    j = base;
    j.erase("image_count");
    expect_schema_error(j);
}

TEST(ModelIo, TruncatedFileAndMissingFile)
{
    TempDir dir("model");
    save_model(random_model(7, 2), dir / "m.json");
    const auto text = pathaug::testing::read_bytes(dir / "m.json");
    {
        std::ofstream(dir / "t.json", std::ios::binary) << text.substr(0, text.size() / 2);
    }
    try {
        load_model(dir / "t.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    }
    try {
        load_model(dir / "none.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::IoError);
    }
}
