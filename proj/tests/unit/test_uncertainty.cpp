#include <gtest/gtest.h>

#include <cmath>

#include "apie/uncertainty.hpp"
#include "oracle/oracles.hpp"
#include "unit/generators.hpp"

using namespace apie;

namespace {

const SchemaSpec kSchema = gen::joint_schema();

ProbeSet probe(std::vector<std::string> gens) { return make_probe_set("s", std::move(gens), kSchema); }

std::string ent_list(std::initializer_list<const char*> texts) {
    ExtractionSet s;
    for (const char* t : texts) s.insert(ExtractionTuple::entity("PER", t));
    return serialize_extractions(s);
}

std::u32string random_u32(std::mt19937_64& rng, std::size_t max_len) {
    static const std::u32string alphabet = U"abcAé東😀";
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::u32string s(len(rng), U'a');
    for (auto& c : s) c = alphabet[pick(rng)];
    return s;
}

/// A random probe set plus the oracle's independent view of it.
std::pair<ProbeSet, std::vector<oracle::Gen>> random_probe(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> kdist(2, 6);
    const int k = kdist(rng);
    std::vector<std::string> texts;
    std::vector<oracle::Gen> view;
    for (int i = 0; i < k; ++i) {
        oracle::Gen g;
        const auto mode = rng() % 4;
        std::string text;
        if (mode == 0) {
            text = "no answer " + std::to_string(rng() % 100);
        } else if (mode == 1) {
            text = R"([{"type":"GPE","text":"Paris"}])";
        } else {
            const auto set = gen::extraction_set(rng, kSchema, 3);
            text = serialize_extractions(set);
            g.valid = true;
            g.length = set.size();
            for (const auto& t : set) {
                if (t.kind == TupleKind::entity) {
                    g.tuples.insert("E|" + t.type + "|" + t.text);
                    g.keysets.push_back({"text", "type"});
                } else {
                    g.tuples.insert("R|" + t.type + "|" + t.head + "|" + t.tail);
                    g.keysets.push_back({"head", "tail", "type"});
                }
            }
        }
        g.text = decode_utf8(text);
        texts.push_back(text);
        view.push_back(std::move(g));
    }
    return {make_probe_set("r", texts, kSchema), view};
}

}  // namespace

TEST(Levenshtein, Examples) {
    EXPECT_EQ(levenshtein("abc", "abc"), 0u);
    EXPECT_EQ(levenshtein("", "abc"), 3u);
    EXPECT_EQ(levenshtein("kitten", "sitting"), 3u);
    EXPECT_EQ(levenshtein("é", "e"), 1u);
    EXPECT_EQ(levenshtein("東京", "京"), 1u);
}

TEST(Levenshtein, MatchesFullTableOracle) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 1000; ++i) {
        const auto a = random_u32(rng, 12);
        const auto b = random_u32(rng, 12);
        const auto expected = oracle::levenshtein(a, b);
        ASSERT_EQ(levenshtein(a, b), expected);
        ASSERT_EQ(levenshtein(oracle::utf8_encode(a), oracle::utf8_encode(b)), expected);
    }
}

TEST(Levenshtein, MetricProperties) {
    std::mt19937_64 rng(12);
    for (int i = 0; i < 200; ++i) {
        const auto a = random_u32(rng, 10);
        const auto b = random_u32(rng, 10);
        const auto c = random_u32(rng, 10);
        EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
        EXPECT_LE(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c));
        EXPECT_EQ(levenshtein(a, a), 0u);
    }
}

TEST(DecodeUtf8, InvalidBytesStayDistinct) {
    const auto a = decode_utf8(std::string("\xff", 1));
    const auto b = decode_utf8(std::string("\xfe", 1));
    ASSERT_EQ(a.size(), 1u);
    EXPECT_NE(a, b);
    EXPECT_EQ(decode_utf8("é"), std::u32string(U"é"));
    EXPECT_EQ(decode_utf8(std::string("\xc3", 1)).size(), 1u);
}

TEST(PairwiseDisagreement, Examples) {
    EXPECT_EQ(pairwise_disagreement(probe({"x", "x", "x"})), 0.0);
    EXPECT_NEAR(pairwise_disagreement(probe({"ab", "ab", "ad"})), 2.0 / 3.0, 1e-12);
    EXPECT_EQ(pairwise_disagreement(probe({"", "x"})), 1.0);
    EXPECT_NEAR(pairwise_disagreement(probe({"ab", "abcd"}), true), 0.5, 1e-12);
    EXPECT_THROW(pairwise_disagreement(probe({"only"})), ContractViolation);
}

TEST(ParsingFailureRate, Examples) {
    const auto ok = ent_list({"a"});
    EXPECT_EQ(parsing_failure_rate(probe({ok, ok, ok})), 0.0);
    EXPECT_EQ(parsing_failure_rate(probe({ok, "bad", ok})), 1.0 / 3.0);
    EXPECT_EQ(parsing_failure_rate(probe({"x", "y", "z"})), 1.0);
}

TEST(StructuralDisagreement, Examples) {
    const auto two = ent_list({"a", "b"});
    EXPECT_EQ(structural_disagreement(probe({two, two})), 0.0);
    EXPECT_EQ(structural_disagreement(probe({two, "bad", "worse"})), 0.0);
    EXPECT_NEAR(structural_disagreement(probe({two, ent_list({"a", "b", "c", "d"})})), 0.25, 1e-12);
    const auto rel = R"([{"type":"Work_For","head":"a","tail":"b"}])";
    EXPECT_NEAR(structural_disagreement(probe({ent_list({"a"}), rel})), 0.5, 1e-12);
}

TEST(FormatUncertainty, Examples) {
    const auto ok = ent_list({"a"});
    EXPECT_EQ(format_uncertainty(probe({ok, ok, ok})), 0.0);
    EXPECT_EQ(format_uncertainty(probe({"x", "y", "z"})), 0.5);
    EXPECT_NEAR(format_uncertainty(probe({ok, "bad", ok})), 1.0 / 6.0, 1e-12);
    EXPECT_THROW(format_uncertainty(probe({ok, ok}), 0.7, 0.7), ConfigError);
}

TEST(Jaccard, Examples) {
    const ExtractionSet x{ExtractionTuple::entity("PER", "x")};
    const ExtractionSet xy{ExtractionTuple::entity("PER", "x"), ExtractionTuple::entity("PER", "y")};
    EXPECT_EQ(jaccard_similarity(xy, xy), 1.0);
    EXPECT_EQ(jaccard_similarity(x, xy), 0.5);
    EXPECT_EQ(jaccard_similarity({}, {}), 1.0);
    EXPECT_EQ(jaccard_similarity({}, x), 0.0);
}

TEST(ContentUncertainty, Examples) {
    EXPECT_EQ(content_uncertainty(probe({ent_list({"x"}), ent_list({"x"})})), 0.0);
    EXPECT_EQ(content_uncertainty(probe({ent_list({"x"}), ent_list({"x", "y"})})), 0.5);
    EXPECT_EQ(content_uncertainty(probe({"a", "b", "c"})), 1.0);
    EXPECT_EQ(content_uncertainty(probe({ent_list({"x"}), "b"})), 0.0);
}

TEST(Metrics, MatchStraightLineOracle) {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 200; ++i) {
        const auto [p, view] = random_probe(rng);
        ASSERT_NEAR(pairwise_disagreement(p), oracle::disagreement(view), 1e-12);
        ASSERT_NEAR(parsing_failure_rate(p), oracle::fail_rate(view), 1e-12);
        ASSERT_NEAR(structural_disagreement(p), oracle::structural(view), 1e-12);
        ASSERT_NEAR(format_uncertainty(p), oracle::format(view), 1e-12);
        ASSERT_NEAR(content_uncertainty(p), oracle::content(view), 1e-12);
    }
}

TEST(Metrics, StayInUnitRange) {
    std::mt19937_64 rng(14);
    for (int i = 0; i < 200; ++i) {
        const auto [p, view] = random_probe(rng);
        const auto s = score_probe(p);
        for (double v : {s.r_fail, s.s_dis, s.u_f_raw, s.u_c_raw}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_GE(s.u_d_raw, 0.0);
    }
}

TEST(MinMax, Examples) {
    EXPECT_EQ(minmax_normalize(std::vector<double>{1, 2, 3}), (std::vector<double>{0, 0.5, 1}));
    EXPECT_EQ(minmax_normalize(std::vector<double>{5, 5, 5}), (std::vector<double>{0, 0, 0}));
    EXPECT_THROW(minmax_normalize(std::vector<double>{}), ContractViolation);
}

TEST(MinMax, AffineInvariance) {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<double> u(0, 100);
    for (int i = 0; i < 100; ++i) {
        std::vector<double> v(8);
        for (auto& x : v) x = u(rng);
        std::vector<double> w;
        for (double x : v) w.push_back(2 * x + 7);
        const auto a = minmax_normalize(v);
        const auto b = minmax_normalize(w);
        for (std::size_t j = 0; j < v.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
    }
}

TEST(TotalUncertainty, Examples) {
    EXPECT_NEAR(total_uncertainty(1, 1, 1, Weights{0.2, 0.3, 0.5}), 1.0, 1e-12);
    EXPECT_NEAR(total_uncertainty(0.5, 0, 1, Weights{0.8, 0.1, 0.1}), 0.5, 1e-9);
    EXPECT_THROW(total_uncertainty(1.5, 0, 0, Weights{}), ContractViolation);
    EXPECT_THROW(total_uncertainty(0, 0, 0, Weights{1, 1, 1}), ContractViolation);
}

TEST(ScorePool, NormalizesAcrossPool) {
    const auto ok = ent_list({"a"});
    std::vector<ProbeSet> pool = {probe({ok, ok, ok}), probe({ok, "x", ent_list({"b"})}), probe({"x", "yy", "zzz"})};
    pool[0].sample_id = "a";
    pool[1].sample_id = "b";
    pool[2].sample_id = "c";
    const auto scores = score_pool(pool, Weights{});
    ASSERT_EQ(scores.size(), 3u);
    EXPECT_EQ(scores[0].u_total, 0.0);
    for (const auto& s : scores) {
        EXPECT_GE(s.u_total, 0.0);
        EXPECT_LE(s.u_total, 1.0);
    }
    const auto back = scores_from_json(nlohmann::json(scores_to_json(scores[1])));
    EXPECT_EQ(back.sample_id, "b");
    EXPECT_EQ(back.u_total, scores[1].u_total);
    EXPECT_EQ(back.k_valid, scores[1].k_valid);
}
