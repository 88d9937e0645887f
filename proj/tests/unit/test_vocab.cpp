#include <gtest/gtest.h>

#include <fstream>

#include "hsd/error.hpp"
#include "hsd/vocab.hpp"
#include "support/synthetic.hpp"

using namespace hsd;

TEST(Vocab, CharTokensAreCodepoints) {
    const auto t = tokenize("a\xC3\xA9 b", VocabLevel::kChar);
    ASSERT_EQ(t.size(), 4u);
    EXPECT_EQ(t[1], "\xC3\xA9");
}

TEST(Vocab, BuildOrderAndReservedIds) {
    const std::vector<std::string> texts{"b a a", "c a b"};
    const auto v = Vocab::build(texts, VocabLevel::kWord, 2);
    EXPECT_EQ(v.size(), 4u);
    EXPECT_EQ(v.id("a"), 2);
    EXPECT_EQ(v.id("b"), 3);
    EXPECT_EQ(v.id("c"), Vocab::kUnk);
    EXPECT_EQ(v.token(Vocab::kPad), "<pad>");
}

TEST(Vocab, EncodeTruncatesAndPads) {
    const std::vector<std::string> texts{"x y z"};
    const auto v = Vocab::build(texts, VocabLevel::kWord, 1);
    const auto s = encode("x y z w", v, 3);
    EXPECT_EQ(s.length, 3);
    EXPECT_EQ(s.ids.size(), 3u);
    const auto p = encode("x", v, 4);
    EXPECT_EQ(p.length, 1);
    EXPECT_EQ(p.ids[3], Vocab::kPad);
    EXPECT_EQ(decode(p, v), std::vector<std::string>{"x"});
}

TEST(Vocab, JsonRoundTrip) {
    const auto ds = fixtures::separable_dataset(20);
    std::vector<std::string> texts;
    for (const auto& it : ds.items) texts.push_back(it.text);
    const auto v = Vocab::build(texts, VocabLevel::kChar, 1);
    EXPECT_EQ(Vocab::from_json(v.to_json()), v);
}

TEST(Embeddings, LoadsGloveStyleFile) {
    const auto dir = fixtures::temp_dir("glove");
    {
        std::ofstream f(dir / "v.txt");
        f << "2 3\nhello 1 2 3\nworld 4 5 6\n";
    }
    const auto v = Vocab::from_tokens(VocabLevel::kWord, 1, {"hello", "missing"});
    const auto e = load_pretrained_embeddings(dir / "v.txt", v, 3, 1);
    EXPECT_EQ(e.rows.rows(), 4);
    EXPECT_DOUBLE_EQ(e.rows(2, 2), 3.0);
    EXPECT_DOUBLE_EQ(e.rows.row(0).norm(), 0.0);
    EXPECT_DOUBLE_EQ(e.coverage, 0.5);
    EXPECT_THROW(load_pretrained_embeddings(dir / "v.txt", v, 5, 1), DataError);
}
