#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prefalign/common.hpp"

namespace prefalign {

enum class ProblemId { TwoSum, MinStack, TicTacToe, Other };
enum class Language { Cpp, Python };
enum class Origin { Original, Augmented };

std::string to_string(ProblemId p);
std::string to_string(Language l);
std::string to_string(Origin o);
ProblemId parse_problem_id(std::string_view s);
Language parse_language(std::string_view s);
Origin parse_origin(std::string_view s);

struct SourceProgram {
  std::string id;
  ProblemId problem = ProblemId::Other;
  Language language = Language::Cpp;
  std::string text;
  Origin origin = Origin::Original;
  std::optional<std::string> parent_id;
  std::optional<std::uint64_t> seed;

  /// Throws DomainError when the origin/parent invariants or the non-empty
  /// text invariant are violated.
  void validate() const;

  /// Id of the original program this one descends from (itself if original).
  const std::string& root_id() const { return parent_id ? *parent_id : id; }

  json to_json() const;
  static SourceProgram from_json(const json& j);
};

// ---------------------------------------------------------------------------
// Lexing

enum class TokenKind { Keyword, Identifier, Literal, Punctuation, Whitespace, Comment };

std::string to_string(TokenKind k);

struct Token {
  TokenKind kind;
  std::string lexeme;

  bool operator==(const Token&) const = default;
};

/// Lossless lexer: concatenating the lexemes reproduces `text` byte for byte.
/// Throws LexError on empty input and on unterminated strings or comments.
std::vector<Token> tokenize(std::string_view text, Language language);
std::vector<Token> tokenize_source(const SourceProgram& program);
std::string join_tokens(const std::vector<Token>& tokens);

// ---------------------------------------------------------------------------
// Behavior-preserving transforms

enum class Transform { Rename, DeadCodeElim, Reformat, TypeUpconvert };

std::string to_string(Transform t);
Transform parse_transform(std::string_view s);

/// Names that a problem's test harness calls and which must survive renaming.
const std::vector<std::string>& protected_names(ProblemId problem);

/// Alpha-renames locally declared identifiers to v0, v1, ... The fresh names
/// are assigned in first-occurrence order permuted by `seed`; names that are
/// called, accessed as members, or required by the problem API are kept.
SourceProgram rename_identifiers(const SourceProgram& program, std::uint64_t seed);

/// Removes statements following an unconditional return/break in the same
/// block, and unused declarations initialized from a literal.
SourceProgram eliminate_dead_code(const SourceProgram& program);

/// Canonical four-space re-indentation and attached ("K&R") opening braces.
SourceProgram reformat(const SourceProgram& program);

/// Widens `int` locals to `long long` and `float` locals to `double` when every
/// use is arithmetic. No-op for Python.
SourceProgram upconvert_types(const SourceProgram& program);

SourceProgram apply_transform(const SourceProgram& program, Transform t,
                              std::uint64_t seed);

struct AugmentConfig {
  std::vector<Transform> transforms{Transform::Rename, Transform::DeadCodeElim,
                                    Transform::Reformat, Transform::TypeUpconvert};
  int variants_per_program = 9;
  std::uint64_t seed = 0;

  void validate() const;
  json to_json() const;
  static AugmentConfig from_json(const json& j);
};

/// Originals first, followed by their augmented variants; de-duplicated by
/// exact text. Programs that fail to lex are skipped with a warning.
std::vector<SourceProgram> augment_corpus(const std::vector<SourceProgram>& programs,
                                          const AugmentConfig& cfg);

// ---------------------------------------------------------------------------
// Corpus directories: one source file per program plus manifest.jsonl.

std::vector<SourceProgram> load_corpus(const std::filesystem::path& dir);
void save_corpus(const std::filesystem::path& dir,
                 const std::vector<SourceProgram>& programs);

}  // namespace prefalign
