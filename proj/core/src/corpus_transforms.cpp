#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "prefalign/corpus.hpp"

namespace prefalign {

namespace {

constexpr std::size_t npos = static_cast<std::size_t>(-1);

bool significant(const Token& t) {
  return t.kind != TokenKind::Whitespace && t.kind != TokenKind::Comment;
}

std::size_t prev_sig(const std::vector<Token>& t, std::size_t i) {
  while (i > 0) {
    --i;
    if (significant(t[i])) return i;
  }
  return npos;
}

std::size_t next_sig(const std::vector<Token>& t, std::size_t i) {
  for (++i; i < t.size(); ++i) {
    if (significant(t[i])) return i;
  }
  return npos;
}

bool is(const std::vector<Token>& t, std::size_t i, std::string_view lexeme) {
  return i != npos && i < t.size() && t[i].lexeme == lexeme;
}

bool is_newline_ws(const Token& t) {
  return t.kind == TokenKind::Whitespace && t.lexeme.find('\n') != std::string::npos;
}

std::size_t matching_open(const std::vector<Token>& t, std::size_t close) {
  const std::string& c = t[close].lexeme;
  const std::string o = c == ")" ? "(" : c == "]" ? "[" : "{";
  int depth = 0;
  for (std::size_t i = close + 1; i-- > 0;) {
    if (t[i].kind != TokenKind::Punctuation) continue;
    if (t[i].lexeme == c) ++depth;
    if (t[i].lexeme == o && --depth == 0) return i;
  }
  return npos;
}

SourceProgram with_text(const SourceProgram& p, std::string text) {
  SourceProgram out = p;
  out.text = std::move(text);
  return out;
}

const std::unordered_set<std::string_view>& cpp_type_keywords() {
  static const std::unordered_set<std::string_view> kw{
      "int", "long", "short", "char", "bool", "float", "double", "auto",
      "unsigned", "signed", "const", "size_t", "wchar_t"};
  return kw;
}

// ---------------------------------------------------------------------------
// Renaming

bool ends_type(const std::vector<Token>& t, std::size_t p) {
  if (p == npos) return false;
  const Token& tok = t[p];
  if (tok.kind == TokenKind::Keyword) {
    return cpp_type_keywords().contains(tok.lexeme) && tok.lexeme != "const";
  }
  if (tok.kind == TokenKind::Identifier) {
    const std::size_t pp = prev_sig(t, p);
    // `return x`, `goto x`, `new T` are not declarations.
    if (pp != npos && t[pp].kind == TokenKind::Keyword &&
        (t[pp].lexeme == "return" || t[pp].lexeme == "goto" || t[pp].lexeme == "new" ||
         t[pp].lexeme == "case" || t[pp].lexeme == "throw" || t[pp].lexeme == "delete")) {
      return false;
    }
    return true;
  }
  if (tok.lexeme == ">") return true;
  if (tok.lexeme == "&" || tok.lexeme == "*" || tok.lexeme == "&&") {
    return ends_type(t, prev_sig(t, p));
  }
  return false;
}

std::set<std::string> cpp_renamable(const std::vector<Token>& t,
                                    const std::vector<std::string>& protect) {
  static const std::unordered_set<std::string_view> decl_follow{"=", ";", ",", ")", "[", "{", ":"};
  std::set<std::string> declared;
  std::set<std::string> blocked(protect.begin(), protect.end());

  bool in_preproc = false;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Token& tok = t[i];
    if (tok.lexeme == "#" && (i == 0 || is_newline_ws(t[i - 1]) || prev_sig(t, i) == npos)) {
      in_preproc = true;
    }
    if (is_newline_ws(tok) && !(i > 0 && t[i - 1].lexeme == "\\")) in_preproc = false;
    if (tok.kind != TokenKind::Identifier) continue;
    if (in_preproc) {
      blocked.insert(tok.lexeme);
      continue;
    }
    const std::size_t p = prev_sig(t, i);
    const std::size_t n = next_sig(t, i);
    if (is(t, p, ".") || is(t, p, "->") || is(t, p, "::") || is(t, n, "::") ||
        is(t, n, "(") || is(t, n, "<") || (n != npos && t[n].kind == TokenKind::Identifier) ||
        is(t, p, "~") || is(t, p, "class") || is(t, p, "struct") || is(t, p, "enum") ||
        is(t, p, "namespace") || is(t, p, "goto") || is(t, p, "typename")) {
      blocked.insert(tok.lexeme);
      continue;
    }
    // `Type& name` / `Type* name` at a declaration boundary: `Type` is a type.
    if (is(t, n, "&") || is(t, n, "*") || is(t, n, "&&")) {
      const std::size_t nn = next_sig(t, n);
      if (nn != npos && t[nn].kind == TokenKind::Identifier && ends_type(t, p) == false &&
          (p == npos || is(t, p, ";") || is(t, p, "{") || is(t, p, "}") || is(t, p, "(") ||
           is(t, p, ",") || is(t, p, "const"))) {
        blocked.insert(tok.lexeme);
        continue;
      }
    }
    if (ends_type(t, p) && n != npos && decl_follow.contains(t[n].lexeme)) {
      declared.insert(tok.lexeme);
    }
  }
  std::set<std::string> out;
  for (const auto& name : declared) {
    if (!blocked.contains(name)) out.insert(name);
  }
  return out;
}

std::set<std::string> python_renamable(const std::vector<Token>& t,
                                       const std::vector<std::string>& protect) {
  std::set<std::string> declared;
  std::set<std::string> blocked(protect.begin(), protect.end());
  blocked.insert("self");
  blocked.insert("cls");

  static const std::regex ident_re("[A-Za-z_][A-Za-z0-9_]*");
  int depth = 0;
  // Stack of flags: whether each open paren belongs to a `def` header.
  std::vector<bool> def_paren;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Token& tok = t[i];
    if (tok.kind == TokenKind::Literal && !tok.lexeme.empty()) {
      const auto q = tok.lexeme.find_first_of("'\"");
      const std::string prefix = tok.lexeme.substr(0, q == std::string::npos ? 0 : q);
      if (prefix.find_first_of("fF") != std::string::npos) {
        for (auto it = std::sregex_iterator(tok.lexeme.begin(), tok.lexeme.end(), ident_re);
             it != std::sregex_iterator(); ++it) {
          blocked.insert(it->str());
        }
      }
    }
    if (tok.kind == TokenKind::Punctuation) {
      if (tok.lexeme == "(" || tok.lexeme == "[" || tok.lexeme == "{") {
        const std::size_t p = prev_sig(t, i);
        const std::size_t pp = p == npos ? npos : prev_sig(t, p);
        def_paren.push_back(tok.lexeme == "(" && is(t, pp, "def"));
        ++depth;
      } else if (tok.lexeme == ")" || tok.lexeme == "]" || tok.lexeme == "}") {
        if (!def_paren.empty()) def_paren.pop_back();
        --depth;
      }
    }
    if (tok.kind != TokenKind::Identifier) continue;
    const std::size_t p = prev_sig(t, i);
    const std::size_t n = next_sig(t, i);
    if (is(t, p, ".") || is(t, n, "(") || is(t, p, "def") || is(t, p, "class") ||
        is(t, p, "import") || is(t, p, "from") || is(t, p, "as") || is(t, n, "as") ||
        is(t, p, "global") || is(t, p, "nonlocal") || is(t, p, "@")) {
      blocked.insert(tok.lexeme);
      continue;
    }
    const bool in_def_header = !def_paren.empty() && def_paren.back();
    if (depth > 0 && !in_def_header && is(t, n, "=") && (is(t, p, "(") || is(t, p, ","))) {
      blocked.insert(tok.lexeme);  // keyword argument at a call site
      continue;
    }
    const bool line_start = i == 0 || p == npos || is_newline_ws(t[i - 1]) || is(t, p, ";");
    if (depth == 0 && line_start && is(t, n, "=")) {
      declared.insert(tok.lexeme);
    } else if (is(t, p, "for") && is(t, n, "in")) {
      declared.insert(tok.lexeme);
    } else if (in_def_header && (is(t, p, "(") || is(t, p, ",")) &&
               (is(t, n, ",") || is(t, n, ")") || is(t, n, "=") || is(t, n, ":"))) {
      declared.insert(tok.lexeme);
    }
  }
  std::set<std::string> out;
  for (const auto& name : declared) {
    if (!blocked.contains(name)) out.insert(name);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dead-code elimination, C++

bool is_statement_start(const std::vector<Token>& t, std::size_t i) {
  const std::size_t p = prev_sig(t, i);
  return p == npos || is(t, p, ";") || is(t, p, "{") || is(t, p, "}");
}

// Removes tokens (first, last] ... returns true when something was removed.
bool cpp_remove_unreachable(std::vector<Token>& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Token& tok = t[i];
    if (tok.kind != TokenKind::Keyword ||
        (tok.lexeme != "return" && tok.lexeme != "break" && tok.lexeme != "continue")) {
      continue;
    }
    if (!is_statement_start(t, i)) continue;
    // End of the jump statement.
    std::size_t end = npos;
    int depth = 0;
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      if (t[j].kind != TokenKind::Punctuation) continue;
      const auto& l = t[j].lexeme;
      if (l == "(" || l == "[" || l == "{") ++depth;
      if (l == ")" || l == "]" || l == "}") {
        if (depth == 0) break;
        --depth;
      }
      if (l == ";" && depth == 0) {
        end = j;
        break;
      }
    }
    if (end == npos) continue;
    // Region up to the enclosing block's closing brace (or end of text).
    std::size_t stop = t.size();
    depth = 0;
    bool unsafe = false;
    bool any = false;
    for (std::size_t j = end + 1; j < t.size(); ++j) {
      const auto& l = t[j].lexeme;
      if (t[j].kind == TokenKind::Punctuation) {
        if (l == "{" || l == "(" || l == "[") ++depth;
        if (l == "}" || l == ")" || l == "]") {
          if (depth == 0) {
            stop = j;
            break;
          }
          --depth;
        }
        if (l == "#" || (l == ":" && depth == 0)) unsafe = true;
      }
      if (t[j].kind == TokenKind::Keyword && (l == "case" || l == "default")) unsafe = true;
      if (significant(t[j])) any = true;
    }
    if (unsafe || !any) continue;
    std::size_t erase_to = stop;
    if (erase_to > end + 1 && t[erase_to - 1].kind == TokenKind::Whitespace) --erase_to;
    if (erase_to <= end + 1) continue;
    t.erase(t.begin() + static_cast<std::ptrdiff_t>(end + 1),
            t.begin() + static_cast<std::ptrdiff_t>(erase_to));
    return true;
  }
  return false;
}

bool is_side_effect_free_literal(const std::vector<Token>& t, std::size_t b, std::size_t e) {
  // tokens [b, e) significant-only expected: optional sign then one literal
  std::vector<std::size_t> sig;
  for (std::size_t i = b; i < e; ++i) {
    if (significant(t[i])) sig.push_back(i);
  }
  if (sig.empty() || sig.size() > 2) return false;
  if (sig.size() == 2 && !(is(t, sig[0], "-") || is(t, sig[0], "+"))) return false;
  const Token& lit = t[sig.back()];
  if (lit.kind == TokenKind::Literal) return true;
  return lit.kind == TokenKind::Keyword &&
         (lit.lexeme == "true" || lit.lexeme == "false" || lit.lexeme == "nullptr" ||
          lit.lexeme == "True" || lit.lexeme == "False" || lit.lexeme == "None");
}

// Erase tokens [b, e] and, when they formed a whole line, the line itself.
void erase_statement(std::vector<Token>& t, std::size_t b, std::size_t e) {
  const bool prev_nl = b > 0 && t[b - 1].kind == TokenKind::Whitespace &&
                       t[b - 1].lexeme.find('\n') != std::string::npos;
  const bool next_nl = e + 1 >= t.size() || is_newline_ws(t[e + 1]);
  if (prev_nl && next_nl) {
    auto& ws = t[b - 1].lexeme;
    ws.erase(ws.rfind('\n') + 1);  // drop this line's indentation
    if (e + 1 < t.size()) {
      auto& nws = t[e + 1].lexeme;
      nws.erase(0, nws.find('\n') + 1);  // drop this line's newline
    }
  } else if (b > 0 && t[b - 1].kind == TokenKind::Whitespace && !prev_nl) {
    --b;
  }
  t.erase(t.begin() + static_cast<std::ptrdiff_t>(b),
          t.begin() + static_cast<std::ptrdiff_t>(e + 1));
  t.erase(std::remove_if(t.begin(), t.end(),
                         [](const Token& x) { return x.lexeme.empty(); }),
          t.end());
}

std::unordered_map<std::string, int> identifier_counts(const std::vector<Token>& t) {
  std::unordered_map<std::string, int> counts;
  for (const auto& tok : t) {
    if (tok.kind == TokenKind::Identifier) ++counts[tok.lexeme];
  }
  return counts;
}

bool cpp_remove_unused_declaration(std::vector<Token>& t) {
  const auto counts = identifier_counts(t);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].kind != TokenKind::Keyword || !cpp_type_keywords().contains(t[i].lexeme)) continue;
    if (!is_statement_start(t, i)) continue;
    std::size_t j = i;
    while (j != npos && t[j].kind == TokenKind::Keyword && cpp_type_keywords().contains(t[j].lexeme)) {
      j = next_sig(t, j);
    }
    if (j == npos || t[j].kind != TokenKind::Identifier || counts.at(t[j].lexeme) != 1) continue;
    const std::size_t n = next_sig(t, j);
    std::size_t semi = npos;
    if (is(t, n, ";")) {
      semi = n;
    } else if (is(t, n, "=")) {
      std::size_t k = n + 1;
      while (k < t.size() && t[k].lexeme != ";" && t[k].lexeme != "," && t[k].lexeme != "{" &&
             t[k].lexeme != "}") {
        ++k;
      }
      if (k >= t.size() || t[k].lexeme != ";") continue;
      if (!is_side_effect_free_literal(t, n + 1, k)) continue;
      semi = k;
    } else {
      continue;
    }
    erase_statement(t, i, semi);
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Python line model

struct PyLine {
  std::size_t first = 0;  // first token of the line (after indentation)
  std::size_t last = 0;   // last token before the newline whitespace (inclusive)
  std::size_t indent = 0;
  bool comment_only = false;
};

std::size_t indent_width(std::string_view ws) {
  std::size_t w = 0;
  for (char c : ws) w = c == '\t' ? (w / 8 + 1) * 8 : w + 1;
  return w;
}

std::string indentation_after_newline(const Token& ws) {
  const auto nl = ws.lexeme.rfind('\n');
  return nl == std::string::npos ? ws.lexeme : ws.lexeme.substr(nl + 1);
}

// Logical lines: newline whitespace at bracket depth zero, not after '\'.
std::vector<PyLine> python_lines(const std::vector<Token>& t) {
  std::vector<PyLine> lines;
  int depth = 0;
  std::size_t i = 0;
  std::size_t indent = 0;
  if (!t.empty() && t[0].kind == TokenKind::Whitespace) {
    indent = indent_width(indentation_after_newline(t[0]));
    i = 1;
  }
  std::optional<PyLine> cur;
  for (; i < t.size(); ++i) {
    const Token& tok = t[i];
    const bool boundary = depth == 0 && is_newline_ws(tok) && !(i > 0 && t[i - 1].lexeme == "\\");
    if (boundary) {
      if (cur) lines.push_back(*cur);
      cur.reset();
      indent = indent_width(indentation_after_newline(tok));
      continue;
    }
    if (tok.kind == TokenKind::Punctuation) {
      if (tok.lexeme == "(" || tok.lexeme == "[" || tok.lexeme == "{") ++depth;
      if (tok.lexeme == ")" || tok.lexeme == "]" || tok.lexeme == "}") depth = std::max(0, depth - 1);
    }
    if (!cur) {
      if (tok.kind == TokenKind::Whitespace) continue;
      cur = PyLine{i, i, indent, tok.kind == TokenKind::Comment};
    }
    if (tok.kind != TokenKind::Whitespace) cur->last = i;
    if (tok.kind != TokenKind::Comment && tok.kind != TokenKind::Whitespace) cur->comment_only = false;
  }
  if (cur) lines.push_back(*cur);
  return lines;
}

// Erase lines [from, to) (indices into `lines`) including their line breaks.
void erase_python_lines(std::vector<Token>& t, const std::vector<PyLine>& lines,
                        std::size_t from, std::size_t to) {
  const std::size_t b = lines[from].first;
  const std::size_t e = lines[to - 1].last;
  // Keep the newline+indentation that precedes `b`, drop the one after `e`
  // up to the indentation of the following line.
  std::size_t erase_end = e + 1;
  if (erase_end < t.size() && is_newline_ws(t[erase_end])) {
    auto& ws = t[erase_end].lexeme;
    const std::string tail = ws.substr(ws.rfind('\n') + 1);
    // The preceding whitespace already holds a newline; carry the following
    // line's indentation into it.
    if (b > 0 && t[b - 1].kind == TokenKind::Whitespace) {
      auto& pws = t[b - 1].lexeme;
      pws.erase(pws.rfind('\n') + 1);
      pws += tail;
      ++erase_end;
    }
  } else if (b > 0 && t[b - 1].kind == TokenKind::Whitespace) {
    auto& pws = t[b - 1].lexeme;
    pws.erase(pws.rfind('\n') == std::string::npos ? 0 : pws.rfind('\n') + 1);
  }
  t.erase(t.begin() + static_cast<std::ptrdiff_t>(b),
          t.begin() + static_cast<std::ptrdiff_t>(erase_end));
  t.erase(std::remove_if(t.begin(), t.end(), [](const Token& x) { return x.lexeme.empty(); }),
          t.end());
}

bool python_remove_unreachable(std::vector<Token>& t) {
  const auto lines = python_lines(t);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto& L = lines[li];
    if (L.comment_only) continue;
    const Token& head = t[L.first];
    if (head.kind != TokenKind::Keyword ||
        (head.lexeme != "return" && head.lexeme != "break" && head.lexeme != "continue" &&
         head.lexeme != "raise")) {
      continue;
    }
    if (t[L.last].lexeme == ":" || t[L.last].lexeme == "\\") continue;
    std::size_t end = li + 1;
    std::size_t last_code = li;
    while (end < lines.size() && (lines[end].comment_only || lines[end].indent >= L.indent)) {
      if (!lines[end].comment_only) last_code = end;
      ++end;
    }
    if (last_code == li) continue;
    erase_python_lines(t, lines, li + 1, last_code + 1);
    return true;
  }
  return false;
}

bool python_has_sibling(const std::vector<PyLine>& lines, std::size_t li) {
  const std::size_t ind = lines[li].indent;
  for (std::size_t j = li; j-- > 0;) {
    if (lines[j].comment_only) continue;
    if (lines[j].indent < ind) break;
    if (lines[j].indent == ind) return true;
  }
  for (std::size_t j = li + 1; j < lines.size(); ++j) {
    if (lines[j].comment_only) continue;
    if (lines[j].indent < ind) break;
    if (lines[j].indent == ind) return true;
  }
  return false;
}

bool python_remove_unused_assignment(std::vector<Token>& t) {
  const auto lines = python_lines(t);
  const auto counts = identifier_counts(t);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto& L = lines[li];
    if (L.comment_only) continue;
    if (t[L.first].kind != TokenKind::Identifier || counts.at(t[L.first].lexeme) != 1) continue;
    const std::size_t eq = next_sig(t, L.first);
    if (!is(t, eq, "=") || eq > L.last) continue;
    std::size_t stop = L.last + 1;
    if (t[L.last].kind == TokenKind::Comment) stop = L.last;
    if (!is_side_effect_free_literal(t, eq + 1, stop)) continue;
    if (!python_has_sibling(lines, li)) continue;
    erase_python_lines(t, lines, li, li + 1);
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Reformatting

bool line_is_preprocessor(const std::vector<Token>& t, std::size_t first_on_line) {
  return first_on_line < t.size() && t[first_on_line].lexeme == "#";
}

std::string cpp_reformat(const std::vector<Token>& in) {
  // Pass 1: attach lone opening braces to the previous line.
  std::vector<Token> t;
  t.reserve(in.size());
  bool line_preproc = false;
  bool line_start = true;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Token& tok = in[i];
    if (line_start && significant(tok)) {
      line_preproc = tok.lexeme == "#";
      line_start = false;
    }
    if (is_newline_ws(tok)) {
      const std::size_t n = next_sig(in, i);
      const bool next_is_brace = is(in, n, "{") && n == i + 1;
      const bool prev_ok = i > 0 && in[i - 1].kind != TokenKind::Comment && !line_preproc &&
                           !(in[i - 1].lexeme == "\\");
      const std::size_t p = prev_sig(in, i);
      const bool prev_tok_ok = p != npos && !is(in, p, ";") && !is(in, p, "{") &&
                               !is(in, p, "}") && !is(in, p, ":");
      if (next_is_brace && prev_ok && prev_tok_ok) {
        t.push_back({TokenKind::Whitespace, " "});
        continue;
      }
      if (!(i > 0 && in[i - 1].lexeme == "\\")) line_start = true;
    }
    t.push_back(tok);
  }

  // Pass 2: regenerate whitespace.
  std::string out;
  int brace = 0;
  int paren = 0;
  bool preproc = false;
  bool at_line_start = true;
  auto indent_for = [&](std::size_t first) {
    int depth = brace;
    if (is(t, first, "}")) depth = std::max(0, depth - 1);
    if (first < t.size() && t[first].kind == TokenKind::Keyword &&
        (t[first].lexeme == "public" || t[first].lexeme == "private" ||
         t[first].lexeme == "protected") &&
        is(t, next_sig(t, first), ":")) {
      depth = std::max(0, depth - 1);
    }
    if (paren > 0) depth += 1;
    return std::string(static_cast<std::size_t>(std::max(0, depth)) * 4, ' ');
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Token& tok = t[i];
    if (tok.kind == TokenKind::Whitespace) {
      const auto newlines = static_cast<std::size_t>(std::count(tok.lexeme.begin(), tok.lexeme.end(), '\n'));
      if (newlines == 0) {
        if (!at_line_start && i + 1 < t.size()) out.push_back(' ');
        continue;
      }
      if (i + 1 >= t.size()) break;  // trailing whitespace
      const bool continuation = i > 0 && t[i - 1].lexeme == "\\";
      if (at_line_start && out.empty()) continue;  // leading whitespace
      out.append(std::min<std::size_t>(newlines, 2), '\n');
      if (!continuation) preproc = false;
      const std::size_t first = i + 1;
      if (line_is_preprocessor(t, first)) {
        preproc = true;
      } else if (continuation && preproc) {
        out += "    ";
      } else {
        out += indent_for(first);
      }
      at_line_start = true;
      continue;
    }
    if (out.empty() && tok.lexeme == "#") preproc = true;
    at_line_start = false;
    out += tok.lexeme;
    if (tok.kind == TokenKind::Punctuation && !preproc) {
      if (tok.lexeme == "{") ++brace;
      if (tok.lexeme == "}") brace = std::max(0, brace - 1);
      if (tok.lexeme == "(" || tok.lexeme == "[") ++paren;
      if (tok.lexeme == ")" || tok.lexeme == "]") paren = std::max(0, paren - 1);
    }
  }
  out.push_back('\n');
  return out;
}

std::string python_reformat(const std::vector<Token>& t) {
  std::string out;
  std::vector<std::size_t> stack{0};
  int depth = 0;
  bool at_line_start = true;
  std::size_t i = 0;
  if (!t.empty() && t[0].kind == TokenKind::Whitespace) i = 1;
  auto level_for = [&](std::size_t width, bool commit) {
    if (!commit) {
      std::size_t lvl = 0;
      for (std::size_t k = 0; k < stack.size(); ++k) {
        if (stack[k] <= width) lvl = k;
      }
      return lvl;
    }
    if (width > stack.back()) {
      stack.push_back(width);
    } else {
      while (stack.size() > 1 && width < stack.back()) stack.pop_back();
    }
    return stack.size() - 1;
  };
  for (; i < t.size(); ++i) {
    const Token& tok = t[i];
    if (tok.kind == TokenKind::Whitespace) {
      const auto newlines = static_cast<std::size_t>(std::count(tok.lexeme.begin(), tok.lexeme.end(), '\n'));
      const bool continuation = i > 0 && t[i - 1].lexeme == "\\";
      if (newlines == 0) {
        if (!at_line_start && i + 1 < t.size()) out.push_back(' ');
        continue;
      }
      if (i + 1 >= t.size()) break;
      if (depth > 0 || continuation) {
        out.append(newlines, '\n');
        out += indentation_after_newline(tok);
        continue;
      }
      out.append(std::min<std::size_t>(newlines, 3), '\n');
      const std::size_t width = indent_width(indentation_after_newline(tok));
      const bool comment_line = t[i + 1].kind == TokenKind::Comment;
      out.append(level_for(width, !comment_line) * 4, ' ');
      at_line_start = true;
      continue;
    }
    at_line_start = false;
    out += tok.lexeme;
    if (tok.kind == TokenKind::Punctuation) {
      if (tok.lexeme == "(" || tok.lexeme == "[" || tok.lexeme == "{") ++depth;
      if (tok.lexeme == ")" || tok.lexeme == "]" || tok.lexeme == "}") depth = std::max(0, depth - 1);
    }
  }
  out.push_back('\n');
  return out;
}

// ---------------------------------------------------------------------------
// Type up-conversion

bool is_condition_paren(const std::vector<Token>& t, std::size_t open) {
  const std::size_t p = prev_sig(t, open);
  if (p == npos) return true;
  if (t[p].kind == TokenKind::Keyword) {
    const auto& l = t[p].lexeme;
    return l == "if" || l == "while" || l == "for" || l == "switch" || l == "return";
  }
  if (t[p].kind == TokenKind::Identifier || t[p].kind == TokenKind::Literal) return false;
  return !(t[p].lexeme == ">" || t[p].lexeme == ")" || t[p].lexeme == "]");
}

bool arithmetic_neighbor(const std::vector<Token>& t, std::size_t k, bool before) {
  static const std::unordered_set<std::string_view> ops{
      "+", "-", "*", "/", "%", "<", ">", "<=", ">=", "==", "!=", "=", "+=", "-=",
      "*=", "/=", "%=", "++", "--", "!", "&&", "||", "?", "<<", ">>", "^", "|"};
  if (k == npos) return false;
  const Token& tok = t[k];
  if (tok.kind == TokenKind::Keyword) return before && tok.lexeme == "return";
  if (tok.kind != TokenKind::Punctuation) return false;
  const auto& l = tok.lexeme;
  if (ops.contains(l)) return true;
  if (before) {
    if (l == "[" || l == ";" || l == "}") return true;
    if (l == "(") return is_condition_paren(t, k);
    return false;
  }
  if (l == "]" || l == ";") return true;
  if (l == ")") {
    const std::size_t open = matching_open(t, k);
    return open != npos && is_condition_paren(t, open);
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------

const std::vector<std::string>& protected_names(ProblemId problem) {
  static const std::vector<std::string> two_sum{"twoSum", "two_sum", "Solution", "main"};
  static const std::vector<std::string> min_stack{"MinStack", "push", "pop", "top", "getMin",
                                                  "get_min", "main"};
  static const std::vector<std::string> tic_tac_toe{"TicTacToe", "move", "main"};
  static const std::vector<std::string> other{"main"};
  switch (problem) {
    case ProblemId::TwoSum: return two_sum;
    case ProblemId::MinStack: return min_stack;
    case ProblemId::TicTacToe: return tic_tac_toe;
    case ProblemId::Other: return other;
  }
  return other;
}

SourceProgram rename_identifiers(const SourceProgram& program, std::uint64_t seed) {
  auto tokens = tokenize_source(program);
  const auto& protect = protected_names(program.problem);
  const auto renamable = program.language == Language::Cpp ? cpp_renamable(tokens, protect)
                                                           : python_renamable(tokens, protect);
  if (renamable.empty()) return program;

  std::vector<std::string> order;
  std::unordered_set<std::string> seen;
  bool prefix_clash = false;
  static const std::regex fresh_re("v[0-9]+");
  for (const auto& tok : tokens) {
    if (tok.kind != TokenKind::Identifier) continue;
    if (renamable.contains(tok.lexeme)) {
      if (seen.insert(tok.lexeme).second) order.push_back(tok.lexeme);
    } else if (std::regex_match(tok.lexeme, fresh_re)) {
      prefix_clash = true;
    }
  }
  std::vector<std::size_t> slots(order.size());
  std::iota(slots.begin(), slots.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  if (seed != 0) std::shuffle(slots.begin(), slots.end(), rng);
  const std::string prefix = prefix_clash ? "v_" : "v";

  std::unordered_map<std::string, std::string> mapping;
  for (std::size_t k = 0; k < order.size(); ++k) {
    mapping[order[k]] = prefix + std::to_string(slots[k]);
  }
  for (auto& tok : tokens) {
    if (tok.kind != TokenKind::Identifier) continue;
    if (auto it = mapping.find(tok.lexeme); it != mapping.end()) tok.lexeme = it->second;
  }
  return with_text(program, join_tokens(tokens));
}

SourceProgram eliminate_dead_code(const SourceProgram& program) {
  auto tokens = tokenize_source(program);
  if (program.language == Language::Cpp) {
    while (cpp_remove_unreachable(tokens)) {}
    while (cpp_remove_unused_declaration(tokens)) {}
  } else {
    while (python_remove_unreachable(tokens)) {}
    while (python_remove_unused_assignment(tokens)) {}
  }
  return with_text(program, join_tokens(tokens));
}

SourceProgram reformat(const SourceProgram& program) {
  const auto tokens = tokenize_source(program);
  return with_text(program, program.language == Language::Cpp ? cpp_reformat(tokens)
                                                               : python_reformat(tokens));
}

SourceProgram upconvert_types(const SourceProgram& program) {
  if (program.language != Language::Cpp) return program;
  auto t = tokenize_source(program);

  // name -> declaration keyword indices; names with any other declaration form
  // or any non-arithmetic use are dropped.
  std::map<std::string, std::vector<std::size_t>> decls;
  std::set<std::string> rejected;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].kind != TokenKind::Identifier) continue;
    const std::size_t p = prev_sig(t, i);
    const std::size_t n = next_sig(t, i);
    const bool typed = p != npos && t[p].kind == TokenKind::Keyword &&
                       cpp_type_keywords().contains(t[p].lexeme);
    if (typed) {
      const bool widenable = t[p].lexeme == "int" || t[p].lexeme == "float";
      const std::size_t pp = prev_sig(t, p);
      const bool stmt = pp == npos || is(t, pp, ";") || is(t, pp, "{") || is(t, pp, "}") ||
                        (is(t, pp, "(") && is(t, prev_sig(t, pp), "for"));
      bool single = is(t, n, "=") || is(t, n, ";");
      if (single) {
        int depth = 0;
        for (std::size_t k = n; k < t.size(); ++k) {
          const auto& l = t[k].lexeme;
          if (t[k].kind != TokenKind::Punctuation) continue;
          if (l == "(" || l == "[" || l == "{") ++depth;
          if (l == ")" || l == "]" || l == "}") --depth;
          if (depth < 0) { single = false; break; }
          if (depth == 0 && l == ",") { single = false; break; }
          if (depth == 0 && l == ";") break;
        }
      }
      if (widenable && stmt && single && !decls[t[i].lexeme].empty() &&
          t[decls[t[i].lexeme].front()].lexeme != t[p].lexeme) {
        rejected.insert(t[i].lexeme);
      }
      if (widenable && stmt && single) {
        decls[t[i].lexeme].push_back(p);
      } else {
        rejected.insert(t[i].lexeme);
      }
      continue;
    }
    if (!arithmetic_neighbor(t, p, true) || !arithmetic_neighbor(t, n, false)) {
      rejected.insert(t[i].lexeme);
    }
  }
  bool changed = false;
  for (const auto& [name, kws] : decls) {
    if (rejected.contains(name)) continue;
    for (std::size_t k : kws) {
      t[k].lexeme = t[k].lexeme == "int" ? "long long" : "double";
      changed = true;
    }
  }
  return changed ? with_text(program, join_tokens(t)) : program;
}

SourceProgram apply_transform(const SourceProgram& program, Transform tr, std::uint64_t seed) {
  switch (tr) {
    case Transform::Rename: return rename_identifiers(program, seed);
    case Transform::DeadCodeElim: return eliminate_dead_code(program);
    case Transform::Reformat: return reformat(program);
    case Transform::TypeUpconvert: return upconvert_types(program);
  }
  return program;
}

}  // namespace prefalign
