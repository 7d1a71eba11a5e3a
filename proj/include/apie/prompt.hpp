#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "apie/core.hpp"

namespace apie {

/// Labeled demonstration placed in the prompt.
struct Exemplar {
    std::string id;
    std::string input;
    ExtractionSet output;

    bool operator==(const Exemplar&) const = default;
};

/// Four fixed sections: task, schema, exemplars, target. The exemplar block
/// holds {input} and {output}; the target block holds {target_text}.
struct PromptTemplate {
    std::string task_definition;
    /// Optional text placed before the generated schema instructions.
    std::string schema_preamble;
    std::string exemplar_block;
    std::string target_block;

    /// Parses the `### TASK` / `### SCHEMA` / `### EXEMPLARS` / `### TARGET`
    /// file format. Throws ConfigError{TemplateError}.
    static PromptTemplate parse(std::string_view text);
    static PromptTemplate load(const std::filesystem::path& path);
    static PromptTemplate default_template();

    std::string to_text() const;
    std::string digest() const;
};

std::string_view default_template_text();

/// Label lists, the required object shapes, the empty-list rule and the
/// "output only the JSON list" instruction.
std::string schema_instruction_text(const SchemaSpec& schema);

/// Renders the prompt. Exemplars appear in the given order; with none the
/// exemplar section is omitted. Throws DataError{SchemaMismatch} when an
/// exemplar output does not validate against the schema.
std::string build_prompt(const Sample& target, std::span<const Exemplar> exemplars, const PromptTemplate& tmpl,
                         const SchemaSpec& schema);

}  // namespace apie
