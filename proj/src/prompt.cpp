#include "apie/prompt.hpp"

#include <array>
#include <sstream>

#include "apie/digest.hpp"
#include "apie/fsutil.hpp"
#include "apie/schema_validator.hpp"

namespace apie {

namespace {

constexpr std::string_view kDefaultTemplate =
    "### TASK\n"
    "You are an expert in information extraction. Read the input text and extract every element that matches "
    "the target schema.\n"
    "\n"
    "### SCHEMA\n"
    "Target schema and output format:\n"
    "\n"
    "### EXEMPLARS\n"
    "Input: {input}\n"
    "Output: {output}\n"
    "\n"
    "### TARGET\n"
    "Input: {target_text}\n"
    "Output:\n";

constexpr std::array<std::string_view, 4> kSections = {"TASK", "SCHEMA", "EXEMPLARS", "TARGET"};
constexpr std::array<std::string_view, 3> kPlaceholders = {"{input}", "{output}", "{target_text}"};

[[noreturn]] void template_error(const std::string& msg) { throw ConfigError("TemplateError", msg); }

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) {
        ++n;
    }
    return n;
}

void expect_placeholders(std::string_view section, std::string_view body, std::size_t input, std::size_t output,
                         std::size_t target) {
    const std::array<std::size_t, 3> want = {input, output, target};
    for (std::size_t i = 0; i < kPlaceholders.size(); ++i) {
        const auto got = count_occurrences(body, kPlaceholders[i]);
        if (got != want[i]) {
            template_error("section " + std::string(section) + " must contain " + std::string(kPlaceholders[i]) +
                           " exactly " + std::to_string(want[i]) + " time(s), found " + std::to_string(got));
        }
    }
}

/// Single left-to-right pass, so substituted values are never re-scanned.
std::string substitute(std::string_view fmt, std::string_view input, std::string_view output,
                       std::string_view target) {
    std::string out;
    std::size_t i = 0;
    while (i < fmt.size()) {
        bool replaced = false;
        if (fmt[i] == '{') {
            const std::array<std::string_view, 3> values = {input, output, target};
            for (std::size_t p = 0; p < kPlaceholders.size(); ++p) {
                if (fmt.substr(i, kPlaceholders[p].size()) == kPlaceholders[p]) {
                    out += values[p];
                    i += kPlaceholders[p].size();
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced) out.push_back(fmt[i++]);
    }
    return out;
}

std::string join_labels(const std::vector<std::string>& labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += ", ";
        out += labels[i];
    }
    return out;
}

}  // namespace

std::string_view default_template_text() { return kDefaultTemplate; }

PromptTemplate PromptTemplate::parse(std::string_view text) {
    std::array<std::string, 4> bodies;
    int current = -1;
    for (const auto& line : split_lines(text)) {
        const auto t = trim(line);
        if (t.rfind("### ", 0) == 0) {
            const auto name = trim(t.substr(4));
            const int expected = current + 1;
            if (expected >= static_cast<int>(kSections.size()) || name != kSections[static_cast<std::size_t>(expected)]) {
                template_error("unexpected section header '" + std::string(t) + "'; sections must be TASK, SCHEMA, "
                               "EXEMPLARS, TARGET in that order");
            }
            current = expected;
            continue;
        }
        if (current < 0) {
            if (!t.empty()) template_error("text before the first section header");
            continue;
        }
        auto& body = bodies[static_cast<std::size_t>(current)];
        body += line;
        body += '\n';
    }
    if (current != static_cast<int>(kSections.size()) - 1) template_error("template is missing sections");

    PromptTemplate tmpl;
    tmpl.task_definition = std::string(trim(bodies[0]));
    tmpl.schema_preamble = std::string(trim(bodies[1]));
    tmpl.exemplar_block = std::string(trim(bodies[2]));
    tmpl.target_block = std::string(trim(bodies[3]));
    expect_placeholders("TASK", tmpl.task_definition, 0, 0, 0);
    expect_placeholders("SCHEMA", tmpl.schema_preamble, 0, 0, 0);
    expect_placeholders("EXEMPLARS", tmpl.exemplar_block, 1, 1, 0);
    expect_placeholders("TARGET", tmpl.target_block, 0, 0, 1);
    if (tmpl.task_definition.empty()) template_error("TASK section is empty");
    return tmpl;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) { return parse(read_file(path)); }

PromptTemplate PromptTemplate::default_template() { return parse(kDefaultTemplate); }

std::string PromptTemplate::to_text() const {
    std::ostringstream out;
    out << "### TASK\n" << task_definition << "\n\n### SCHEMA\n";
    if (!schema_preamble.empty()) out << schema_preamble << "\n";
    out << "\n### EXEMPLARS\n" << exemplar_block << "\n\n### TARGET\n" << target_block << "\n";
    return out.str();
}

std::string PromptTemplate::digest() const { return sha256_hex(to_text()); }

std::string schema_instruction_text(const SchemaSpec& schema) {
    std::ostringstream out;
    const bool joint = schema.task == TaskKind::joint_ner_re;
    out << "Entity types: " << join_labels(schema.entity_types) << "\n";
    if (joint) out << "Relation types: " << join_labels(schema.relation_types) << "\n";
    out << "Output format: a JSON list of objects. ";
    if (joint) {
        out << "Each entity object must contain exactly the keys \"type\" and \"text\", where \"type\" is one of the "
               "entity types and \"text\" is the entity mention copied from the input. "
               "Each relation object must contain exactly the keys \"type\", \"head\" and \"tail\", where \"type\" is "
               "one of the relation types and \"head\" and \"tail\" are the mentions of the two related entities.\n";
    } else {
        out << "Each object must contain exactly the keys \"type\" and \"text\", where \"type\" is one of the entity "
               "types and \"text\" is the entity mention copied from the input.\n";
    }
    out << "If the input contains nothing to extract, output an empty list: []\n";
    out << "Output only the JSON list, with no other text.";
    return out.str();
}

std::string build_prompt(const Sample& target, std::span<const Exemplar> exemplars, const PromptTemplate& tmpl,
                         const SchemaSpec& schema) {
    std::string out = tmpl.task_definition;
    out += "\n\n";
    if (!tmpl.schema_preamble.empty()) {
        out += tmpl.schema_preamble;
        out += '\n';
    }
    out += schema_instruction_text(schema);
    for (const auto& ex : exemplars) {
        const std::string serialized = serialize_extractions(ex.output);
        const auto check = parse_output(serialized, schema, ParseOptions{true, {}});
        if (!check.valid() || *check.extractions != ex.output) {
            const std::string why = check.failure_kind ? to_string(*check.failure_kind) : "not canonical";
            throw DataError("SchemaMismatch", "exemplar '" + ex.id + "' does not validate: " + why);
        }
        out += "\n\n";
        out += substitute(tmpl.exemplar_block, ex.input, serialized, {});
    }
    out += "\n\n";
    out += substitute(tmpl.target_block, {}, {}, target.text);
    return out;
}

}  // namespace apie
