#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

#include "prefalign/corpus.hpp"

namespace prefalign {

namespace {

const std::unordered_set<std::string_view>& cpp_keywords() {
  static const std::unordered_set<std::string_view> kw{
      "alignas", "alignof", "and", "and_eq", "asm", "auto", "bitand", "bitor",
      "bool", "break", "case", "catch", "char", "char8_t", "char16_t",
      "char32_t", "class", "compl", "concept", "const", "consteval",
      "constexpr", "constinit", "const_cast", "continue", "co_await",
      "co_return", "co_yield", "decltype", "default", "delete", "do",
      "double", "dynamic_cast", "else", "enum", "explicit", "export",
      "extern", "false", "float", "for", "friend", "goto", "if", "inline",
      "int", "long", "mutable", "namespace", "new", "noexcept", "not",
      "not_eq", "nullptr", "operator", "or", "or_eq", "private", "protected",
      "public", "register", "reinterpret_cast", "requires", "return",
      "short", "signed", "sizeof", "static", "static_assert", "static_cast",
      "struct", "switch", "template", "this", "thread_local", "throw", "true",
      "try", "typedef", "typeid", "typename", "union", "unsigned", "using",
      "virtual", "void", "volatile", "wchar_t", "while", "xor", "xor_eq"};
  return kw;
}

const std::unordered_set<std::string_view>& python_keywords() {
  static const std::unordered_set<std::string_view> kw{
      "False", "None", "True", "and", "as", "assert", "async", "await",
      "break", "class", "continue", "def", "del", "elif", "else", "except",
      "finally", "for", "from", "global", "if", "import", "in", "is",
      "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
      "while", "with", "yield"};
  return kw;
}

constexpr std::array<std::string_view, 27> kCppOperators{
    ">>=", "<<=", "<=>", "->*", "...", "::", "->", "++", "--", "<<",
    ">>",  "<=",  ">=",  "==",  "!=",  "&&", "||", "+=", "-=", "*=",
    "/=",  "%=",  "&=",  "|=",  "^=",  ".*", "##"};

constexpr std::array<std::string_view, 24> kPythonOperators{
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=",
    ">=",  "==",  "!=",  "+=",  "-=",  "*=", "/=", "%=", "&=", "|=", "^=", "@="};

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_'; }
bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

class Lexer {
 public:
  Lexer(std::string_view text, Language lang) : s_(text), lang_(lang) {}

  std::vector<Token> run() {
    if (s_.empty()) throw LexError("empty input");
    while (pos_ < s_.size()) step();
    return std::move(out_);
  }

 private:
  void emit(TokenKind k, std::size_t begin) {
    out_.push_back({k, std::string(s_.substr(begin, pos_ - begin))});
  }

  char peek(std::size_t off = 0) const {
    return pos_ + off < s_.size() ? s_[pos_ + off] : '\0';
  }

  void step() {
    const std::size_t begin = pos_;
    const auto c = static_cast<unsigned char>(s_[pos_]);
    if (std::isspace(c)) {
      while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      return emit(TokenKind::Whitespace, begin);
    }
    if (lang_ == Language::Cpp) {
      if (c == '/' && peek(1) == '/') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        return emit(TokenKind::Comment, begin);
      }
      if (c == '/' && peek(1) == '*') {
        const auto end = s_.find("*/", pos_ + 2);
        if (end == std::string_view::npos) throw LexError("unterminated block comment");
        pos_ = end + 2;
        return emit(TokenKind::Comment, begin);
      }
    } else if (c == '#') {
      while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      return emit(TokenKind::Comment, begin);
    }
    if (std::isdigit(c) || (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
      lex_number();
      return emit(TokenKind::Literal, begin);
    }
    if (is_ident_start(c)) {
      while (pos_ < s_.size() && is_ident_char(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string_view word = s_.substr(begin, pos_ - begin);
      if (pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\'') && is_string_prefix(word)) {
        lex_string(word);
        return emit(TokenKind::Literal, begin);
      }
      const auto& kw = lang_ == Language::Cpp ? cpp_keywords() : python_keywords();
      return emit(kw.contains(word) ? TokenKind::Keyword : TokenKind::Identifier, begin);
    }
    if (c == '"' || c == '\'') {
      lex_string({});
      return emit(TokenKind::Literal, begin);
    }
    lex_operator();
    emit(TokenKind::Punctuation, begin);
  }

  bool is_string_prefix(std::string_view w) const {
    std::string lower(w);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lang_ == Language::Cpp) {
      return w == "u8" || w == "u" || w == "U" || w == "L" || w == "R" ||
             w == "u8R" || w == "uR" || w == "UR" || w == "LR";
    }
    return lower == "r" || lower == "b" || lower == "f" || lower == "u" ||
           lower == "rb" || lower == "br" || lower == "fr" || lower == "rf";
  }

  void lex_number() {
    while (pos_ < s_.size()) {
      const auto ch = static_cast<unsigned char>(s_[pos_]);
      if (std::isalnum(ch) || ch == '_' || ch == '.' ||
          (lang_ == Language::Cpp && ch == '\'' && pos_ + 1 < s_.size() &&
           std::isalnum(static_cast<unsigned char>(s_[pos_ + 1])))) {
        const char prev = s_[pos_];
        ++pos_;
        if ((prev == 'e' || prev == 'E' || prev == 'p' || prev == 'P') &&
            pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) {
          ++pos_;
        }
      } else {
        break;
      }
    }
  }

  // `prefix` is the already-consumed encoding/raw prefix (may be empty).
  void lex_string(std::string_view prefix) {
    const bool raw = !prefix.empty() && (prefix.back() == 'R' ||
                                         (lang_ == Language::Python &&
                                          prefix.find_first_of("rR") != std::string_view::npos));
    const char quote = s_[pos_];
    if (lang_ == Language::Cpp && raw && quote == '"') {
      const auto open = s_.find('(', pos_);
      if (open == std::string_view::npos) throw LexError("malformed raw string");
      const std::string delim = ")" + std::string(s_.substr(pos_ + 1, open - pos_ - 1)) + "\"";
      const auto close = s_.find(delim, open + 1);
      if (close == std::string_view::npos) throw LexError("unterminated raw string");
      pos_ = close + delim.size();
      return;
    }
    if (lang_ == Language::Python && peek(1) == quote && peek(2) == quote) {
      const std::string triple(3, quote);
      std::size_t i = pos_ + 3;
      while (true) {
        if (i >= s_.size()) throw LexError("unterminated triple-quoted string");
        if (s_[i] == '\\' && !raw) { i += 2; continue; }
        if (s_.compare(i, 3, triple) == 0) break;
        ++i;
      }
      pos_ = i + 3;
      return;
    }
    std::size_t i = pos_ + 1;
    while (true) {
      if (i >= s_.size() || s_[i] == '\n') throw LexError("unterminated string literal");
      if (s_[i] == '\\') {
        i += 2;
        continue;
      }
      if (s_[i] == quote) break;
      ++i;
    }
    pos_ = i + 1;
  }

  void lex_operator() {
    auto try_ops = [&](const auto& ops) {
      for (auto op : ops) {
        if (s_.compare(pos_, op.size(), op) == 0) {
          pos_ += op.size();
          return true;
        }
      }
      return false;
    };
    const bool matched =
        lang_ == Language::Cpp ? try_ops(kCppOperators) : try_ops(kPythonOperators);
    if (!matched) ++pos_;
  }

  std::string_view s_;
  Language lang_;
  std::size_t pos_ = 0;
  std::vector<Token> out_;
};

}  // namespace

std::string to_string(TokenKind k) {
  switch (k) {
    case TokenKind::Keyword: return "keyword";
    case TokenKind::Identifier: return "identifier";
    case TokenKind::Literal: return "literal";
    case TokenKind::Punctuation: return "punctuation";
    case TokenKind::Whitespace: return "whitespace";
    case TokenKind::Comment: return "comment";
  }
  return "unknown";
}

std::vector<Token> tokenize(std::string_view text, Language language) {
  return Lexer(text, language).run();
}

std::vector<Token> tokenize_source(const SourceProgram& program) {
  return tokenize(program.text, program.language);
}

std::string join_tokens(const std::vector<Token>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t.lexeme;
  return out;
}

}  // namespace prefalign
