#include <gtest/gtest.h>

#include "apie/schema_validator.hpp"
#include "unit/generators.hpp"

using namespace apie;

namespace {

const SchemaSpec kJoint = gen::joint_schema();
const SchemaSpec kNer = gen::ner_schema();

std::optional<FailureKind> failure_of(std::string_view raw, const SchemaSpec& schema = kJoint, bool strict = false) {
    ParseOptions o;
    o.strict_payload = strict;
    return parse_output(raw, schema, o).failure_kind;
}

}  // namespace

TEST(ParseOutput, MinimalEntityList) {
    const auto o = parse_output(R"([{"type":"PER","text":"John"}])", kNer);
    ASSERT_TRUE(o.valid());
    EXPECT_EQ(*o.extractions, ExtractionSet{ExtractionTuple::entity("PER", "John")});
}

TEST(ParseOutput, EmptyListIsValid) {
    const auto o = parse_output("[]", kJoint);
    ASSERT_TRUE(o.valid());
    EXPECT_TRUE(o.extractions->empty());
}

TEST(ParseOutput, EachFailureKind) {
    EXPECT_EQ(failure_of("no list here"), FailureKind::not_json);
    EXPECT_EQ(failure_of("[{\"type\":\"PER\",\"text\":\"x\"}"), FailureKind::not_json);
    EXPECT_EQ(failure_of(R"({"type":"PER","text":"x"})"), FailureKind::not_a_list);
    EXPECT_EQ(failure_of(R"("just a string")"), FailureKind::not_a_list);
    EXPECT_EQ(failure_of(R"([{"type":"PER","text":"x"}, "PER"])"), FailureKind::element_not_object);
    EXPECT_EQ(failure_of(R"([{"type":"PER"}])"), FailureKind::missing_required_key);
    EXPECT_EQ(failure_of(R"([{"type":"Work_For","head":"a"}])"), FailureKind::missing_required_key);
    EXPECT_EQ(failure_of(R"([{"type":"PER","text":"x","score":0.9}])"), FailureKind::extra_unknown_key);
    EXPECT_EQ(failure_of(R"([{"type":"PER","text":3}])"), FailureKind::wrong_value_type);
    EXPECT_EQ(failure_of(R"([{"type":"PER","text":"   "}])"), FailureKind::wrong_value_type);
    EXPECT_EQ(failure_of(R"([{"type":"GPE","text":"x"}])"), FailureKind::unknown_label);
    EXPECT_EQ(failure_of(R"([{"type":"Born_In","head":"a","tail":"b"}])"), FailureKind::unknown_label);
}

TEST(ParseOutput, FirstFailureWins) {
    EXPECT_EQ(failure_of(R"([{"type":"GPE","text":"x"}, 7])"), FailureKind::unknown_label);
    EXPECT_EQ(failure_of(R"([7, {"type":"GPE","text":"x"}])"), FailureKind::element_not_object);
}

TEST(ParseOutput, RelationObjectsNeedJointSchema) {
    EXPECT_EQ(failure_of(R"([{"type":"PER","head":"a","tail":"b"}])", kNer), FailureKind::missing_required_key);
    const auto o = parse_output(R"([{"type":"Work_For","head":" a ","tail":"b"}])", kJoint);
    ASSERT_TRUE(o.valid());
    EXPECT_TRUE(o.extractions->contains(ExtractionTuple::relation("Work_For", "a", "b")));
}

TEST(ParseOutput, SalvagesFencedPayload) {
    const auto o = parse_output("Here you go: ```json\n[{\"type\":\"PER\",\"text\":\"John\"}]\n```", kNer);
    ASSERT_TRUE(o.valid());
    EXPECT_EQ(o.extractions->size(), 1u);
    EXPECT_EQ(failure_of("Here you go: ```[{\"type\":\"PER\",\"text\":\"John\"}]```", kNer, true),
              FailureKind::not_json);
}

TEST(ParseOutput, DeduplicatesButKeepsSignatureLength) {
    const auto o = parse_output(R"([{"type":"PER","text":"John"},{"type":"PER","text":" John"}])", kNer);
    ASSERT_TRUE(o.valid());
    EXPECT_EQ(o.extractions->size(), 1u);
    EXPECT_EQ(o.signature->length, 2u);
}

TEST(ExtractPayload, Examples) {
    EXPECT_EQ(extract_json_payload("Here you go: ```[{\"a\":1}]```"), "[{\"a\":1}]");
    EXPECT_EQ(extract_json_payload("[1,[2]] trailing"), "[1,[2]]");
    EXPECT_EQ(extract_json_payload("no list here"), std::nullopt);
}

TEST(ExtractPayload, IgnoresBracketsInStrings) {
    EXPECT_EQ(extract_json_payload(R"(x [{"text":"a]b"}] y)"), R"([{"text":"a]b"}])");
    EXPECT_EQ(extract_json_payload(R"([{"text":"say \"]\" now"}])"), R"([{"text":"say \"]\" now"}])");
}

TEST(ExtractPayload, SkipsUnbalancedOpeners) {
    EXPECT_EQ(extract_json_payload("[unclosed"), std::nullopt);
}

TEST(StructuralSignature, Examples) {
    const auto two = parse_output(R"([{"type":"PER","text":"a"},{"text":"b","type":"LOC"}])", kJoint);
    EXPECT_EQ(structural_signature(two),
              (StructSignature{2, {{"text", "type"}, {"text", "type"}}}));
    EXPECT_EQ(structural_signature(parse_output("[]", kJoint)), (StructSignature{0, {}}));
    const auto mixed = parse_output(R"([{"type":"Work_For","head":"a","tail":"b"},{"type":"PER","text":"a"}])", kJoint);
    EXPECT_EQ(structural_signature(mixed),
              (StructSignature{2, {{"head", "tail", "type"}, {"text", "type"}}}));
    EXPECT_THROW(structural_signature(parse_output("nope", kJoint)), ContractViolation);
}

TEST(Serialize, Examples) {
    EXPECT_EQ(serialize_extractions({}), "[]");
    EXPECT_EQ(serialize_extractions({ExtractionTuple::entity("PER", "John")}), R"([{"type":"PER","text":"John"}])");
    EXPECT_EQ(serialize_extractions({ExtractionTuple::relation("Work_For", "a", "b")}),
              R"([{"type":"Work_For","head":"a","tail":"b"}])");
}

TEST(Serialize, RoundTripProperty) {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
        const auto& schema = i % 2 ? kJoint : kNer;
        const auto s = gen::extraction_set(rng, schema);
        const auto text = serialize_extractions(s);
        const auto o = parse_output(text, schema, ParseOptions{true, {}});
        ASSERT_TRUE(o.valid()) << text;
        ASSERT_EQ(*o.extractions, s) << text;
        ASSERT_EQ(serialize_extractions(*o.extractions), text);
    }
}

TEST(FailureKindNames, RoundTrip) {
    for (auto k : {FailureKind::not_json, FailureKind::not_a_list, FailureKind::element_not_object,
                   FailureKind::missing_required_key, FailureKind::extra_unknown_key, FailureKind::wrong_value_type,
                   FailureKind::unknown_label}) {
        EXPECT_EQ(failure_kind_from_string(to_string(k)), k);
    }
    EXPECT_EQ(failure_kind_from_string("bogus"), std::nullopt);
}
