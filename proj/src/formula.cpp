#include "ajm/formula.hpp"

#include <cctype>
#include <set>
#include <sstream>

namespace ajm {

FormulaError::FormulaError(int line_, int col_, const std::string& msg)
    : std::runtime_error("formula:" + std::to_string(line_) + ":" + std::to_string(col_) + ": " +
                         msg),
      line(line_),
      col(col_) {}

namespace {

struct Token {
  enum Kind { ident, number, tilde, plus, lparen, rparen, comma, equals, end } kind;
  std::string text;
  int col = 0;
};

std::vector<Token> tokenize(const std::string& line, int lineno) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    if (c == '#') break;  // comment to end of line
    int col = static_cast<int>(i) + 1;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])) ||
                                 line[j] == '_' || line[j] == '.'))
        ++j;
      out.push_back({Token::ident, line.substr(i, j - i), col});
      i = j;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
      out.push_back({Token::number, line.substr(i, j - i), col});
      i = j;
      continue;
    }
    Token::Kind kind;
    switch (c) {
      case '~': kind = Token::tilde; break;
      case '+': kind = Token::plus; break;
      case '(': kind = Token::lparen; break;
      case ')': kind = Token::rparen; break;
      case ',': kind = Token::comma; break;
      case '=': kind = Token::equals; break;
      default:
        throw FormulaError(lineno, col, std::string("unexpected character '") + c + "'");
    }
    out.push_back({kind, std::string(1, c), col});
    ++i;
  }
  out.push_back({Token::end, "", static_cast<int>(line.size()) + 1});
  return out;
}

class LineParser {
 public:
  LineParser(const std::string& line, int lineno)
      : tokens_(tokenize(line, lineno)), lineno_(lineno) {}

  bool empty() const { return tokens_.size() == 1; }

  std::vector<TermSpec> parse() {
    Token head = expect(Token::ident, "predictor name");
    Predictor k;
    try {
      k = predictor_from_name(head.text);
    } catch (const std::exception&) {
      throw FormulaError(lineno_, head.col, "unknown predictor '" + head.text + "'");
    }
    expect(Token::tilde, "'~'");
    std::vector<TermSpec> terms;
    terms.push_back(term(k));
    while (peek().kind == Token::plus) {
      next();
      terms.push_back(term(k));
    }
    Token tail = peek();
    if (tail.kind != Token::end)
      throw FormulaError(lineno_, tail.col, "expected '+' or end of line");
    return terms;
  }

 private:
  const Token& peek() const { return tokens_[at_]; }
  Token next() { return tokens_[at_++]; }
  Token expect(Token::Kind kind, const std::string& what) {
    Token t = next();
    if (t.kind != kind)
      throw FormulaError(lineno_, t.col,
                         "expected " + what + (t.text.empty() ? "" : ", got '" + t.text + "'"));
    return t;
  }

  TermSpec term(Predictor k) {
    Token t = next();
    TermSpec spec;
    spec.predictor = k;
    if (t.kind == Token::number) {
      if (t.text != "1")
        throw FormulaError(lineno_, t.col, "only '1' denotes an intercept term");
      spec.kind = TermKind::intercept;
      return spec;
    }
    if (t.kind != Token::ident)
      throw FormulaError(lineno_, t.col, "expected a term, got '" + t.text + "'");

    if (t.text == "lin") {
      expect(Token::lparen, "'('");
      spec.kind = TermKind::linear;
      spec.covariate = expect(Token::ident, "covariate name").text;
      expect(Token::rparen, "')'");
      return spec;
    }
    if (t.text == "s") {
      expect(Token::lparen, "'('");
      spec.covariate = expect(Token::ident, "covariate name").text;
      spec.kind = spec.covariate == "time" ? TermKind::smooth_time : TermKind::smooth;
      spec.n_knots = 10;
      spec.constrained = true;
      options(spec);
      expect(Token::rparen, "')'");
      return spec;
    }
    if (t.text == "ri") {
      expect(Token::lparen, "'('");
      spec.kind = TermKind::random_intercept;
      spec.covariate = expect(Token::ident, "grouping column").text;
      expect(Token::rparen, "')'");
      return spec;
    }
    if (t.text == "fri") {
      expect(Token::lparen, "'('");
      spec.kind = TermKind::functional_random_intercept;
      spec.covariate = expect(Token::ident, "grouping column").text;
      expect(Token::comma, "','");
      Token axis = expect(Token::ident, "time axis");
      if (axis.text != "time")
        throw FormulaError(lineno_, axis.col,
                           "functional random intercepts vary over 'time'");
      spec.n_knots = 12;
      spec.constrained = true;
      options(spec);
      expect(Token::rparen, "')'");
      return spec;
    }
    throw FormulaError(lineno_, t.col, "unknown term function '" + t.text + "'");
  }

  void options(TermSpec& spec) {
    while (peek().kind == Token::comma) {
      next();
      Token key = expect(Token::ident, "option name");
      expect(Token::equals, "'='");
      Token val = expect(Token::number, "integer value");
      int v = std::stoi(val.text);
      if (key.text == "k")
        spec.n_knots = v;
      else if (key.text == "degree")
        spec.degree = v;
      else if (key.text == "r")
        spec.diff_order = v;
      else
        throw FormulaError(lineno_, key.col, "unknown option '" + key.text + "'");
    }
  }

  std::vector<Token> tokens_;
  std::size_t at_ = 0;
  int lineno_;
};

}  // namespace

ModelSpec parse_formula(const std::string& text) {
  ModelSpec spec;
  std::set<Predictor> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    LineParser parser(line, lineno);
    if (parser.empty()) continue;
    std::vector<TermSpec> terms = parser.parse();
    Predictor k = terms.front().predictor;
    if (!seen.insert(k).second)
      throw FormulaError(lineno, 1,
                         std::string("predictor '") + predictor_name(k) + "' declared twice");
    for (TermSpec& t : terms) spec.terms.push_back(std::move(t));
  }
  if (spec.terms.empty()) throw FormulaError(lineno, 1, "no predictor declarations found");
  return spec;
}

namespace {

std::string render_term(const TermSpec& t) {
  std::ostringstream out;
  switch (t.kind) {
    case TermKind::intercept: return "1";
    case TermKind::linear: return "lin(" + t.covariate + ")";
    case TermKind::smooth:
    case TermKind::smooth_time:
      out << "s(" << (t.kind == TermKind::smooth_time ? "time" : t.covariate) << ", k="
          << t.n_knots << ", degree=" << t.degree << ", r=" << t.diff_order << ")";
      return out.str();
    case TermKind::random_intercept: return "ri(" + t.covariate + ")";
    case TermKind::functional_random_intercept:
      out << "fri(" << t.covariate << ", time, k=" << t.n_knots << ", degree=" << t.degree
          << ", r=" << t.diff_order << ")";
      return out.str();
  }
  return "";
}

}  // namespace

std::string render_formula(const ModelSpec& spec) {
  std::ostringstream out;
  for (std::size_t i = 0; i < spec.terms.size(); ++i) {
    const TermSpec& t = spec.terms[i];
    bool new_line = i == 0 || t.predictor != spec.terms[i - 1].predictor;
    if (new_line) {
      if (i > 0) out << "\n";
      out << predictor_name(t.predictor) << " ~ ";
    } else {
      out << " + ";
    }
    out << render_term(t);
  }
  out << "\n";
  return out.str();
}

}  // namespace ajm
