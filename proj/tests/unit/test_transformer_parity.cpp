#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hsd/transformer.hpp"

using namespace hsd;

// Compares against hidden states recorded by tests/fixtures/make_tiny_bert.py
// with the reference implementation (float32, so tolerances are loose).
TEST(TransformerParity, MatchesReferenceImplementation) {
    const char* root = std::getenv("HSD_TINY_BERT");
    if (!root || !std::filesystem::exists(std::filesystem::path(root) / "expected.json"))
        GTEST_SKIP() << "HSD_TINY_BERT fixture not available";
    const std::filesystem::path dir(root);
    std::ifstream in(dir / "expected.json");
    const auto expected = nlohmann::json::parse(in);
    const auto enc = TransformerEncoder::load(dir / "encoder", expected.at("max_tokens").get<int>());
    for (const auto& c : expected.at("cases")) {
        const auto text = c.at("text").get<std::string>();
        const auto ids = enc->tokenize(text);
        EXPECT_EQ(ids, c.at("ids").get<std::vector<std::int32_t>>()) << text;
        if (ids != c.at("ids").get<std::vector<std::int32_t>>()) continue;
        const auto hidden = enc->forward(ids, nullptr); // width x tokens
        const auto ref = c.at("hidden").get<std::vector<std::vector<double>>>();
        double worst = 0.0;
        for (std::size_t t = 0; t < ref.size(); ++t)
            for (std::size_t k = 0; k < ref[t].size(); ++k)
                worst = std::max(worst, std::abs(hidden(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) - ref[t][k]));
        EXPECT_LT(worst, 1e-4) << text;
        const auto pooled = enc->pool(hidden);
        const auto ref_pooled = c.at("pooled").get<std::vector<double>>();
        for (std::size_t k = 0; k < ref_pooled.size(); ++k)
            EXPECT_NEAR(pooled(static_cast<Eigen::Index>(k)), ref_pooled[k], 1e-4);
    }
}
