#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "spatialprobe/corpus.hpp"

using namespace spatialprobe;

namespace {

std::vector<std::string> nouns(std::initializer_list<const char*> xs) {
    return {xs.begin(), xs.end()};
}

}  // namespace

TEST(Vocabulary, DefaultListHasSixtyUniqueNounsAndOneDuplicate) {
    const auto& raw = default_object_nouns();
    ASSERT_EQ(raw.size(), 61u);
    EXPECT_EQ(std::count(raw.begin(), raw.end(), "lamp"), 2);
    const auto v = build_vocabulary(raw);
    EXPECT_EQ(v.entries.size(), 60u);
    EXPECT_EQ(v.duplicates, 1u);
}

TEST(Vocabulary, Singleton) {
    const auto v = build_vocabulary(nouns({"book"}));
    ASSERT_EQ(v.entries.size(), 1u);
    EXPECT_EQ(v.entries[0], "book");
}

TEST(Vocabulary, NormalizationCollapsesCaseAndWhitespace) {
    const auto v = build_vocabulary(nouns({"Book", "book ", "mug"}));
    EXPECT_EQ(v.entries, nouns({"book", "mug"}));
    EXPECT_EQ(v.duplicates, 1u);
}

TEST(Vocabulary, EmptyListIsRejected) {
    EXPECT_THROW(build_vocabulary(std::vector<std::string>{}), Error);
}

TEST(Vocabulary, BlankNounIsRejected) {
    EXPECT_THROW(build_vocabulary(nouns({"cup", "   "})), Error);
}

TEST(Split, SixtyObjectsGiveFiftyFourSix) {
    for (std::uint64_t seed : {0ull, 1ull, 7ull, 123456789ull}) {
        const auto v = build_vocabulary(default_object_nouns(), seed, 0.9);
        const auto s = split_vocabulary(v);
        EXPECT_EQ(s.train.size(), 54u);
        EXPECT_EQ(s.test.size(), 6u);

        std::set<std::string> train(s.train.begin(), s.train.end());
        std::set<std::string> test(s.test.begin(), s.test.end());
        std::vector<std::string> both;
        std::set_intersection(train.begin(), train.end(), test.begin(), test.end(), std::back_inserter(both));
        EXPECT_TRUE(both.empty());
        std::set<std::string> all(train);
        all.insert(test.begin(), test.end());
        EXPECT_EQ(all, std::set<std::string>(v.entries.begin(), v.entries.end()));
    }
}

TEST(Split, TwoObjectsHalfAndHalf) {
    const auto s = split_vocabulary(build_vocabulary(nouns({"cup", "table"}), 3, 0.5));
    EXPECT_EQ(s.train.size(), 1u);
    EXPECT_EQ(s.test.size(), 1u);
}

TEST(Split, SameSeedSameSplit) {
    const auto a = split_vocabulary(build_vocabulary(default_object_nouns(), 42));
    const auto b = split_vocabulary(build_vocabulary(default_object_nouns(), 42));
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.test, b.test);
}

TEST(Split, DifferentSeedsUsuallyDiffer) {
    const auto a = split_vocabulary(build_vocabulary(default_object_nouns(), 1));
    const auto b = split_vocabulary(build_vocabulary(default_object_nouns(), 2));
    EXPECT_NE(a.test, b.test);
}

TEST(Split, TooSmallVocabularyIsRejected) {
    EXPECT_THROW(split_vocabulary(build_vocabulary(nouns({"cup"}))), Error);
}

TEST(Catalog, ThreeDimensionalCounts) {
    const auto cat = relation_catalog(Dimensionality::three_d);
    const auto atomic = std::count_if(cat.begin(), cat.end(), [](const auto& r) { return r.kind == RelationKind::atomic; });
    EXPECT_EQ(atomic, 6);
    EXPECT_EQ(cat.size() - static_cast<std::size_t>(atomic), 12u);
}

TEST(Catalog, TwoDimensionalCounts) {
    const auto cat = relation_catalog(Dimensionality::two_d);
    const auto composed = std::count_if(cat.begin(), cat.end(), [](const auto& r) { return r.kind == RelationKind::composed; });
    EXPECT_EQ(composed, 4);
    EXPECT_EQ(cat.size(), 8u);
}

TEST(Catalog, ComposedRowsFollowTheResultsTableOrder) {
    const std::vector<std::string> expected{
        "above_right", "above_left", "below_right", "below_left", "above_behind", "above_in_front",
        "below_behind", "below_in_front", "left_behind", "left_in_front", "right_behind", "right_in_front"};
    std::vector<std::string> got;
    for (const auto& r : relation_catalog(Dimensionality::three_d)) {
        if (r.kind == RelationKind::composed) got.push_back(r.id);
    }
    EXPECT_EQ(got, expected);
}

TEST(Catalog, AboveAndLeftOffset) {
    const auto& r = relation_or_throw("above_left");
    EXPECT_EQ(r.offset, (GridOffset{-1, 1, 0}));
    EXPECT_EQ(r.parts, nouns({"above", "left"}));
}

TEST(Catalog, ComposedSurfaceForm) {
    EXPECT_EQ(relation_or_throw("above_right").surface, "diagonally above and to the right of");
    EXPECT_EQ(relation_or_throw("left_in_front").surface, "diagonally to the left and in front of");
}

TEST(Catalog, OffsetInvariants) {
    for (const auto& r : relation_catalog(Dimensionality::three_d)) {
        if (r.kind == RelationKind::atomic) {
            int nonzero = 0;
            for (int c : r.offset) {
                EXPECT_TRUE(c == 0 || c == 1 || c == -1);
                nonzero += c != 0;
            }
            EXPECT_EQ(nonzero, 1) << r.id;
            ASSERT_TRUE(r.inverse_id.has_value());
            const auto& inv = relation_or_throw(*r.inverse_id);
            for (int i = 0; i < 3; ++i) EXPECT_EQ(r.offset[i] + inv.offset[i], 0) << r.id;
        } else {
            GridOffset sum{};
            for (const auto& p : r.parts) {
                for (int i = 0; i < 3; ++i) sum[i] += relation_or_throw(p).offset[i];
            }
            EXPECT_EQ(sum, r.offset) << r.id;
        }
    }
}

TEST(Catalog, UnknownRelation) {
    EXPECT_EQ(find_relation("sideways"), nullptr);
    EXPECT_THROW(relation_or_throw("sideways"), Error);
}

TEST(Prompts, TemplateSentence) {
    EXPECT_EQ(instantiate_template("cup", "above", "table"), "The cup is above the table.");
}

TEST(Prompts, ThreeObjectsTwoRelationsGiveTwelveRecords) {
    const auto objects = nouns({"cup", "table", "lamp"});
    const std::vector<RelationSpec> rels{relation_or_throw("above"), relation_or_throw("left")};
    const auto recs = generate_prompts(objects, rels, Dimensionality::two_d);
    ASSERT_EQ(recs.size(), 12u);

    std::set<std::tuple<std::string, std::string, std::string>> expected;
    for (const auto& a : objects) {
        for (const auto& b : objects) {
            if (a == b) continue;
            for (const auto& r : rels) expected.emplace(a, b, r.id);
        }
    }
    std::set<std::tuple<std::string, std::string, std::string>> got;
    for (const auto& r : recs) got.emplace(r.obj1, r.obj2, r.relation);
    EXPECT_EQ(got, expected);
}

TEST(Prompts, AbovePositions) {
    const auto objects = nouns({"cup", "table"});
    const std::vector<RelationSpec> rels{relation_or_throw("above")};
    const auto recs = generate_prompts(objects, rels, Dimensionality::three_d);
    EXPECT_EQ(recs[0].sentence, "The cup is above the table.");
    EXPECT_EQ(recs[0].p1, (Position{0, 1, 0}));
    EXPECT_EQ(recs[0].p2, (Position{0, 0, 0}));
}

TEST(Prompts, RecordInvariantsHoldForTheFullCorpus) {
    const auto c = build_corpus(CorpusConfig{});
    const std::size_t n_rel = c.relations.size();
    const auto count = [](std::size_t n) { return n * (n - 1); };
    EXPECT_EQ(c.records.size(), (count(c.split.train.size()) + count(c.split.test.size())) * n_rel);

    const std::set<std::string> test(c.split.test.begin(), c.split.test.end());
    std::set<std::int64_t> ids;
    for (const auto& r : c.records) {
        const auto& spec = relation_or_throw(r.relation);
        EXPECT_NE(r.obj1, r.obj2);
        EXPECT_EQ(r.sentence, instantiate_template(r.obj1, spec.surface, r.obj2));
        for (int i = 0; i < 3; ++i) EXPECT_EQ(r.p1[i] - r.p2[i], spec.offset[i]);
        const bool in_test = test.contains(r.obj1) || test.contains(r.obj2);
        EXPECT_EQ(in_test, r.split == Split::test);
        EXPECT_EQ(test.contains(r.obj1), test.contains(r.obj2));
        ids.insert(r.id);
    }
    EXPECT_EQ(ids.size(), c.records.size());
}

TEST(Prompts, NeedTwoObjectsAndARelation) {
    const std::vector<RelationSpec> rels{relation_or_throw("above")};
    EXPECT_THROW(generate_prompts(nouns({"cup"}), rels, Dimensionality::two_d), Error);
    EXPECT_THROW(generate_prompts(nouns({"cup", "mug"}), std::vector<RelationSpec>{}, Dimensionality::two_d), Error);
}

TEST(Prompts, ConcatenatedModeChainsAContextSentence) {
    const auto objects = nouns({"cup", "table", "lamp"});
    const std::vector<RelationSpec> rels{relation_or_throw("above"), relation_or_throw("below")};
    const auto recs = generate_prompts(objects, rels, Dimensionality::two_d, PairMode::concatenated);
    ASSERT_EQ(recs.size(), 12u);
    EXPECT_EQ(recs[0].sentence, "The table is below the lamp. The cup is above the table.");
    for (const auto& r : recs) {
        const auto single = instantiate_template(r.obj1, relation_or_throw(r.relation).surface, r.obj2);
        ASSERT_GT(r.sentence.size(), single.size());
        EXPECT_EQ(r.sentence.substr(r.sentence.size() - single.size()), single);
    }
    EXPECT_THROW(generate_prompts(nouns({"cup", "mug"}), rels, Dimensionality::two_d, PairMode::concatenated), Error);
}

TEST(Serialization, JsonlRoundTripAndStableBytes) {
    CorpusConfig cfg;
    cfg.dim = Dimensionality::two_d;
    cfg.seed = 11;
    const auto a = build_corpus(cfg);
    const auto b = build_corpus(cfg);
    std::ostringstream sa, sb;
    write_corpus(sa, a.records);
    write_corpus(sb, b.records);
    EXPECT_EQ(sa.str(), sb.str());

    std::istringstream in(sa.str());
    const auto back = read_corpus(in);
    ASSERT_EQ(back.size(), a.records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(to_jsonl(back[i]), to_jsonl(a.records[i]));
    }
}

TEST(Serialization, FieldOrderIsFixed) {
    PromptRecord r;
    r.id = 3;
    r.obj1 = "cup";
    r.obj2 = "table";
    r.relation = "above";
    r.sentence = "The cup is above the table.";
    r.p1 = {0, 1, 0};
    EXPECT_EQ(to_jsonl(r),
              R"({"id":3,"obj1":"cup","obj2":"table","relation":"above","sentence":"The cup is above the table.",)"
              R"("p1":[0.0,1.0,0.0],"p2":[0.0,0.0,0.0],"split":"train","dimensionality":"3D"})");
}

TEST(Serialization, MalformedLineIsAFormatError) {
    std::istringstream in("{\"id\":1}\n");
    try {
        read_corpus(in);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::format);
    }
}

TEST(Enums, ParseAndPrint) {
    EXPECT_EQ(parse_dimensionality("2d"), Dimensionality::two_d);
    EXPECT_EQ(to_string(Dimensionality::three_d), "3D");
    EXPECT_EQ(parse_pair_mode("concat"), PairMode::concatenated);
    EXPECT_EQ(parse_pair_mode("single"), PairMode::single);
    EXPECT_THROW(parse_pair_mode("triple"), Error);
    EXPECT_THROW(parse_split("validation"), Error);
}
