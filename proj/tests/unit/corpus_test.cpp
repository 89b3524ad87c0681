#include <gtest/gtest.h>

#include <set>

#include "prefalign/corpus.hpp"
#include "prefalign/sandbox.hpp"
#include "test_util.hpp"

using namespace prefalign;

namespace {

SourceProgram cpp(std::string text, std::string id = "p") {
  SourceProgram p;
  p.id = std::move(id);
  p.problem = ProblemId::Other;
  p.language = Language::Cpp;
  p.text = std::move(text);
  return p;
}

std::vector<SourceProgram> fixtures() { return load_corpus(PREFALIGN_FIXTURES "/corpus"); }

}  // namespace

TEST(Lexer, ClassifiesSimpleDeclaration) {
  const auto toks = tokenize("int a=1;", Language::Cpp);
  const std::vector<Token> want{{TokenKind::Keyword, "int"},     {TokenKind::Whitespace, " "},
                                {TokenKind::Identifier, "a"},    {TokenKind::Punctuation, "="},
                                {TokenKind::Literal, "1"},       {TokenKind::Punctuation, ";"}};
  EXPECT_EQ(toks, want);
}

TEST(Lexer, EmptyAndUnterminatedInputs) {
  EXPECT_THROW(tokenize("", Language::Cpp), LexError);
  EXPECT_THROW(tokenize("int a = \"open;", Language::Cpp), LexError);
  EXPECT_THROW(tokenize("/* never closed", Language::Cpp), LexError);
  EXPECT_THROW(tokenize("s = '''abc", Language::Python), LexError);
}

TEST(Lexer, RoundTripsFixturePrograms) {
  for (const auto& p : fixtures()) {
    EXPECT_EQ(join_tokens(tokenize_source(p)), p.text) << p.id;
  }
  // comments, raw strings and escapes
  const std::string tricky = "// c\nauto s = \"a\\\"b\"; /* x */ char c = '\\''; auto r = R\"(q\"z)\";\n";
  EXPECT_EQ(join_tokens(tokenize(tricky, Language::Cpp)), tricky);
  const std::string py = "x = f'{a}'  # note\ns = \"\"\"multi\nline\"\"\"\n";
  EXPECT_EQ(join_tokens(tokenize(py, Language::Python)), py);
}

TEST(Rename, SeedZeroScheme) {
  EXPECT_EQ(rename_identifiers(cpp("int foo=1; return foo;"), 0).text, "int v0=1; return v0;");
}

TEST(Rename, NoLocalsIsIdentity) {
  const auto p = cpp("return 1 + 2;");
  EXPECT_EQ(rename_identifiers(p, 5).text, p.text);
}

TEST(Rename, IsBijectiveOnLocals) {
  const auto p = cpp("int a = 1; int b = 2; int c = a + b; return c;");
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto toks = tokenize_source(rename_identifiers(p, seed));
    std::set<std::string> ids;
    for (const auto& t : toks) {
      if (t.kind == TokenKind::Identifier) ids.insert(t.lexeme);
    }
    EXPECT_EQ(ids, (std::set<std::string>{"v0", "v1", "v2"})) << seed;
  }
}

TEST(Rename, KeepsProblemApiNames) {
  const auto& ref = reference_solution(ProblemId::TwoSum, Language::Cpp);
  SourceProgram p = cpp(ref);
  p.problem = ProblemId::TwoSum;
  const auto out = rename_identifiers(p, 3);
  EXPECT_NE(out.text.find("twoSum"), std::string::npos);
}

TEST(DeadCode, DropsStatementsAfterReturn) {
  EXPECT_EQ(eliminate_dead_code(cpp("return 1; x=2;")).text, "return 1;");
  const auto clean = cpp("int f(int a) { return a + 1; }");
  EXPECT_EQ(eliminate_dead_code(clean).text, clean.text);
}

TEST(DeadCode, DropsUnusedLiteralDeclarations) {
  const auto out = eliminate_dead_code(cpp("int f() { int unused = 4; return 2; }"));
  EXPECT_EQ(out.text.find("unused"), std::string::npos);
  // initializer with a call is kept
  const auto kept = eliminate_dead_code(cpp("int f() { int unused = g(); return 2; }"));
  EXPECT_NE(kept.text.find("unused"), std::string::npos);
}

TEST(Reformat, IsIdempotent) {
  for (const auto& p : fixtures()) {
    const auto once = reformat(p);
    EXPECT_EQ(reformat(once).text, once.text) << p.id;
  }
}

TEST(Upconvert, WidensArithmeticLocalsOnly) {
  const auto out = upconvert_types(cpp("int f() { int s = 0; s = s + 2; return s; }"));
  EXPECT_NE(out.text.find("long long s"), std::string::npos);
  SourceProgram py;
  py.id = "py";
  py.language = Language::Python;
  py.text = "x = 1\n";
  EXPECT_EQ(upconvert_types(py).text, py.text);
}

TEST(Augment, DeterministicAndLinked) {
  AugmentConfig cfg;
  cfg.variants_per_program = 3;
  cfg.seed = 17;
  const auto a = augment_corpus(fixtures(), cfg);
  const auto b = augment_corpus(fixtures(), cfg);
  ASSERT_EQ(a.size(), b.size());
  std::set<std::string> texts;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].to_json(), b[i].to_json());
    EXPECT_TRUE(texts.insert(a[i].text).second) << "duplicate text " << a[i].id;
    if (a[i].origin == Origin::Augmented) {
      ASSERT_TRUE(a[i].parent_id.has_value());
      ASSERT_TRUE(a[i].seed.has_value());
    }
  }
  EXPECT_LE(a.size(), fixtures().size() * 4);
}

TEST(Augment, CanonicalReformatDeduplicates) {
  const auto canonical = reformat(cpp("int f() {\n    return 1;\n}\n"));
  AugmentConfig cfg;
  cfg.transforms = {Transform::Reformat};
  cfg.variants_per_program = 1;
  const auto out = augment_corpus({canonical}, cfg);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].origin, Origin::Original);
}

TEST(Augment, Errors) {
  AugmentConfig cfg;
  EXPECT_THROW(augment_corpus({}, cfg), AugmentError);
  cfg.variants_per_program = 0;
  EXPECT_THROW(cfg.validate(), DomainError);
  AugmentConfig none;
  none.transforms.clear();
  EXPECT_THROW(none.validate(), DomainError);
  EXPECT_THROW(augment_corpus({cpp("char* s = \"open;")}, AugmentConfig{}), AugmentError);
}

TEST(SourceProgramInvariants, OriginAndParent) {
  auto p = cpp("x");
  p.origin = Origin::Augmented;
  EXPECT_THROW(p.validate(), DomainError);
  p.origin = Origin::Original;
  p.parent_id = "q";
  EXPECT_THROW(p.validate(), DomainError);
  auto empty = cpp("");
  EXPECT_THROW(empty.validate(), DomainError);
}

TEST(CorpusDir, SaveLoadRoundTrip) {
  testutil::TempDir dir;
  AugmentConfig cfg;
  cfg.variants_per_program = 1;
  const auto programs = augment_corpus(fixtures(), cfg);
  save_corpus(dir.path(), programs);
  const auto back = load_corpus(dir.path());
  ASSERT_EQ(back.size(), programs.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].to_json(), programs[i].to_json());
  EXPECT_THROW(load_corpus(dir.path() / "nothing"), MissingPrerequisite);
}

TEST(Augment, RenamedReferenceStillPasses) {
  Sandbox box;
  SourceProgram p = cpp(reference_solution(ProblemId::TwoSum, Language::Cpp));
  p.problem = ProblemId::TwoSum;
  const auto renamed = rename_identifiers(p, 11);
  const auto rep = box.run_suite(renamed.text, Language::Cpp, builtin_suite(ProblemId::TwoSum), ResourceLimits{});
  EXPECT_TRUE(rep.all_passed);
}
