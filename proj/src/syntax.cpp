#include "hsmon/syntax.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace hsmon {

ParseError::ParseError(const std::string& message, int line, int column)
    : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + message),
      line_(line),
      column_(column) {}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// ---- lexer ------------------------------------------------------------------

namespace {

enum class Tok {
  End, Ident, Number, LParen, RParen, LBrace, RBrace, LBracket, RBracket, Comma, Semi, Dot,
  Plus, PlusPlus, Minus, Star, Slash, Caret, Lt, Le, Eq, Ge, Gt, Neq, And, Or, Not, Implies,
  Equiv, Assign, Question, Prime, Forall, Exists, True, False
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) { tokenize(); }

  const Token& peek(std::size_t ahead = 0) const {
    std::size_t i = pos_ + ahead;
    return i < toks_.size() ? toks_[i] : toks_.back();
  }
  Token next() {
    Token t = peek();
    if (pos_ < toks_.size() - 1) ++pos_;
    return t;
  }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    next();
    return true;
  }
  Token expect(Tok k, const char* what) {
    if (peek().kind != k) fail(std::string("expected ") + what);
    return next();
  }
  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    std::string found = t.kind == Tok::End ? "end of input" : "'" + t.text + "'";
    throw ParseError(msg + ", found " + found, t.line, t.column);
  }

 private:
  void tokenize() {
    std::size_t i = 0;
    int line = 1, col = 1;
    auto advance = [&](std::size_t n) {
      for (std::size_t k = 0; k < n; ++k) {
        if (src_[i] == '\n') {
          ++line;
          col = 1;
        } else {
          ++col;
        }
        ++i;
      }
    };
    while (true) {
      while (i < src_.size()) {
        if (std::isspace(static_cast<unsigned char>(src_[i]))) {
          advance(1);
        } else if (src_[i] == '#') {
          while (i < src_.size() && src_[i] != '\n') advance(1);
        } else {
          break;
        }
      }
      Token t;
      t.line = line;
      t.column = col;
      if (i >= src_.size()) {
        t.kind = Tok::End;
        toks_.push_back(t);
        return;
      }
      char c = src_[i];
      auto starts = [&](std::string_view s) { return src_.substr(i, s.size()) == s; };
      if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_'))
          ++j;
        t.text = std::string(src_.substr(i, j - i));
        t.kind = t.text == "true" ? Tok::True : t.text == "false" ? Tok::False : Tok::Ident;
        advance(j - i);
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && i + 1 < src_.size() &&
                  std::isdigit(static_cast<unsigned char>(src_[i + 1])))) {
        std::size_t j = i;
        while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
        if (j < src_.size() && src_[j] == '.') {
          ++j;
          while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
        }
        if (j < src_.size() && (src_[j] == 'e' || src_[j] == 'E')) {
          std::size_t k = j + 1;
          if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
          if (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) {
            while (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) ++k;
            j = k;
          }
        }
        t.kind = Tok::Number;
        t.text = std::string(src_.substr(i, j - i));
        std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
        advance(j - i);
      } else if (c == '\\') {
        std::size_t j = i + 1;
        while (j < src_.size() && std::isalpha(static_cast<unsigned char>(src_[j]))) ++j;
        t.text = std::string(src_.substr(i, j - i));
        if (t.text == "\\forall") {
          t.kind = Tok::Forall;
        } else if (t.text == "\\exists") {
          t.kind = Tok::Exists;
        } else {
          throw ParseError("unknown operator '" + t.text + "'", line, col);
        }
        advance(j - i);
      } else {
        struct Sym {
          std::string_view s;
          Tok k;
        };
        static constexpr Sym syms[] = {
            {"<->", Tok::Equiv}, {"->", Tok::Implies}, {"++", Tok::PlusPlus}, {":=", Tok::Assign},
            {"<=", Tok::Le},     {">=", Tok::Ge},      {"!=", Tok::Neq},      {"&", Tok::And},
            {"|", Tok::Or},      {"!", Tok::Not},      {"<", Tok::Lt},        {">", Tok::Gt},
            {"=", Tok::Eq},      {"+", Tok::Plus},     {"-", Tok::Minus},     {"*", Tok::Star},
            {"/", Tok::Slash},   {"^", Tok::Caret},    {"(", Tok::LParen},    {")", Tok::RParen},
            {"{", Tok::LBrace},  {"}", Tok::RBrace},   {"[", Tok::LBracket},  {"]", Tok::RBracket},
            {",", Tok::Comma},   {";", Tok::Semi},     {".", Tok::Dot},       {"?", Tok::Question},
            {"'", Tok::Prime},
        };
        bool found = false;
        for (const auto& s : syms) {
          if (starts(s.s)) {
            t.kind = s.k;
            t.text = std::string(s.s);
            advance(s.s.size());
            found = true;
            break;
          }
        }
        if (!found) throw ParseError(std::string("unknown operator '") + c + "'", line, col);
      }
      toks_.push_back(t);
    }
  }

  std::string_view src_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---- parser -----------------------------------------------------------------

class Parser {
 public:
  explicit Parser(std::string_view text) : lex_(text) {}

  void finish() {
    if (lex_.peek().kind != Tok::End) lex_.fail("unexpected trailing input");
  }

  // term := product (('+'|'-') product)*
  Term term() {
    Term t = product();
    while (true) {
      if (lex_.accept(Tok::Plus)) {
        t = plus(t, product());
      } else if (lex_.accept(Tok::Minus)) {
        t = minus(t, product());
      } else {
        return t;
      }
    }
  }

  Formula formula() { return equivalence(); }

  Program program() {
    Program p = sequential();
    if (lex_.accept(Tok::PlusPlus)) return choice(p, program());
    return p;
  }

 private:
  Term product() {
    Term t = unary_term();
    while (true) {
      if (lex_.accept(Tok::Star)) {
        t = times(t, unary_term());
      } else if (lex_.accept(Tok::Slash)) {
        t = divide(t, unary_term());
      } else {
        return t;
      }
    }
  }

  Term unary_term() {
    if (lex_.accept(Tok::Minus)) {
      if (lex_.peek().kind == Tok::Number && lex_.peek(1).kind != Tok::Caret) {
        return constant(-lex_.next().number);
      }
      return neg(unary_term());
    }
    return power_term();
  }

  Term power_term() {
    Term base = primary_term();
    if (lex_.accept(Tok::Caret)) {
      bool negative = lex_.accept(Tok::Minus);
      if (lex_.peek().kind != Tok::Number) lex_.fail("expected integer exponent");
      Token n = lex_.next();
      double e = n.number;
      if (e != std::floor(e) || std::fabs(e) > 1e6)
        throw ParseError("exponent must be an integer", n.line, n.column);
      return power(base, static_cast<int>(negative ? -e : e));
    }
    return base;
  }

  Term primary_term() {
    const Token& t = lex_.peek();
    if (t.kind == Tok::Number) return constant(lex_.next().number);
    if (t.kind == Tok::LParen) {
      lex_.next();
      Term inner = term();
      lex_.expect(Tok::RParen, "')'");
      return inner;
    }
    if (t.kind == Tok::Ident) {
      std::string name = lex_.next().text;
      if (lex_.peek().kind == Tok::LParen) {
        lex_.next();
        std::vector<Term> args;
        if (lex_.peek().kind != Tok::RParen) {
          args.push_back(term());
          while (lex_.accept(Tok::Comma)) args.push_back(term());
        }
        lex_.expect(Tok::RParen, "')'");
        if (name == "min" || name == "max") {
          if (args.size() != 2) lex_.fail(name + " takes two arguments");
          return name == "min" ? min_of(args[0], args[1]) : max_of(args[0], args[1]);
        }
        return func(name, std::move(args));
      }
      return var(VarName::from_key(name));
    }
    lex_.fail("expected term");
  }

  Formula equivalence() {
    Formula f = implication();
    if (lex_.accept(Tok::Equiv)) return equiv(f, equivalence());
    return f;
  }

  Formula implication() {
    Formula f = disjunct();
    if (lex_.accept(Tok::Implies)) return implies(f, implication());
    return f;
  }

  Formula disjunct() {
    Formula f = conjunct();
    if (lex_.accept(Tok::Or)) return f_or(f, disjunct());
    return f;
  }

  Formula conjunct() {
    Formula f = unary_formula();
    if (lex_.accept(Tok::And)) return f_and(f, conjunct());
    return f;
  }

  VarName binder() {
    Token t = lex_.expect(Tok::Ident, "variable after quantifier");
    lex_.accept(Tok::Dot);
    return VarName::from_key(t.text);
  }

  Formula unary_formula() {
    switch (lex_.peek().kind) {
      case Tok::Not: lex_.next(); return f_not(unary_formula());
      case Tok::Forall: {
        lex_.next();
        VarName v = binder();
        return forall(v, unary_formula());
      }
      case Tok::Exists: {
        lex_.next();
        VarName v = binder();
        return exists(v, unary_formula());
      }
      case Tok::LBracket: {
        lex_.next();
        Program p = program();
        lex_.expect(Tok::RBracket, "']'");
        return box(p, unary_formula());
      }
      case Tok::Lt: {
        lex_.next();
        Program p = program();
        lex_.expect(Tok::Gt, "'>' closing diamond");
        return diamond(p, unary_formula());
      }
      case Tok::True: lex_.next(); return f_true();
      case Tok::False: lex_.next(); return f_false();
      case Tok::LParen: {
        // Either a parenthesized formula or a comparison whose left term starts with '('.
        Lexer saved = lex_;
        Formula inner;
        try {
          lex_.next();
          inner = formula();
          lex_.expect(Tok::RParen, "')'");
          if (!is_comparison_op(lex_.peek().kind) && !is_term_continuation(lex_.peek().kind))
            return inner;
        } catch (const ParseError&) {
          inner = nullptr;
        }
        if (!inner) {
          lex_ = saved;
          return comparison();
        }
        // `(f) > ...` may still close a diamond; prefer the comparison reading
        // only when it parses.
        Lexer after = lex_;
        lex_ = saved;
        try {
          return comparison();
        } catch (const ParseError&) {
          lex_ = after;
          return inner;
        }
      }
      default: return comparison();
    }
  }

  static bool is_comparison_op(Tok k) {
    return k == Tok::Lt || k == Tok::Le || k == Tok::Eq || k == Tok::Ge || k == Tok::Gt ||
           k == Tok::Neq;
  }
  static bool is_term_continuation(Tok k) {
    return k == Tok::Plus || k == Tok::Minus || k == Tok::Star || k == Tok::Slash ||
           k == Tok::Caret;
  }

  Formula comparison() {
    Term lhs = term();
    Tok k = lex_.peek().kind;
    if (!is_comparison_op(k)) lex_.fail("expected comparison operator");
    lex_.next();
    Term rhs = term();
    switch (k) {
      case Tok::Lt: return lt(lhs, rhs);
      case Tok::Le: return le(lhs, rhs);
      case Tok::Eq: return eq(lhs, rhs);
      case Tok::Ge: return ge(lhs, rhs);
      case Tok::Gt: return gt(lhs, rhs);
      default: return f_not(eq(lhs, rhs));
    }
  }

  Program sequential() {
    Program p = atomic_program();
    if (lex_.accept(Tok::Semi)) {
      // Allow a trailing ';' before a closing brace or the end.
      Tok k = lex_.peek().kind;
      if (k == Tok::RBrace || k == Tok::End || k == Tok::RBracket || k == Tok::PlusPlus ||
          k == Tok::RParen || (k == Tok::Gt && false))
        return p;
      return seq(p, sequential());
    }
    return p;
  }

  Program atomic_program() {
    const Token& t = lex_.peek();
    if (t.kind == Tok::Question) {
      lex_.next();
      return test(unary_formula());
    }
    if (t.kind == Tok::LBrace) {
      lex_.next();
      Program inner;
      if (lex_.peek().kind == Tok::Ident && lex_.peek(1).kind == Tok::Prime) {
        inner = ode_body();
      } else {
        inner = program();
        lex_.expect(Tok::RBrace, "'}'");
      }
      if (lex_.accept(Tok::Star)) return loop(inner);
      return inner;
    }
    if (t.kind == Tok::LParen) {
      lex_.next();
      Program inner = program();
      lex_.expect(Tok::RParen, "')'");
      if (lex_.accept(Tok::Star)) return loop(inner);
      return inner;
    }
    if (t.kind == Tok::Ident) {
      Token name = lex_.next();
      lex_.expect(Tok::Assign, "':='");
      if (VarName::from_key(name.text).post)
        throw ParseError("cannot assign post-state variable '" + name.text + "'", name.line,
                         name.column);
      if (lex_.accept(Tok::Star)) return assign_any(name.text);
      return assign(name.text, term());
    }
    lex_.fail("expected program");
  }

  Program ode_body() {
    std::vector<OdeEquation> eqs;
    Formula domain = f_true();
    while (true) {
      Token name = lex_.expect(Tok::Ident, "ODE variable");
      lex_.expect(Tok::Prime, "'''");
      lex_.expect(Tok::Eq, "'='");
      Term rhs = term();
      for (const auto& e : eqs)
        if (e.var == name.text)
          throw ParseError("duplicate ODE left-hand side '" + name.text + "'", name.line,
                           name.column);
      eqs.push_back({name.text, rhs});
      if (lex_.accept(Tok::Comma)) continue;
      if (lex_.accept(Tok::And)) domain = formula();
      break;
    }
    lex_.expect(Tok::RBrace, "'}' closing ODE");
    return ode(std::move(eqs), domain);
  }

  Lexer lex_;
};

// ---- printer ----------------------------------------------------------------

enum TermPrec { kSum = 1, kProduct = 2, kUnary = 3, kPower = 4, kAtom = 5 };

int term_prec(const Term& t) {
  switch (t->kind) {
    case TermKind::Plus:
    case TermKind::Minus: return kSum;
    case TermKind::Times:
    case TermKind::Divide: return kProduct;
    case TermKind::Neg: return kUnary;
    case TermKind::Const: return t->value < 0 || std::signbit(t->value) ? kUnary : kAtom;
    case TermKind::Power: return kPower;
    default: return kAtom;
  }
}

void print_term(std::ostream& os, const Term& t, int min_prec);

void print_term_wrapped(std::ostream& os, const Term& t, int min_prec) {
  if (term_prec(t) < min_prec) {
    os << '(';
    print_term(os, t, 0);
    os << ')';
  } else {
    print_term(os, t, min_prec);
  }
}

void print_term(std::ostream& os, const Term& t, int) {
  switch (t->kind) {
    case TermKind::Var: os << t->var.key(); return;
    case TermKind::Const: os << format_number(t->value); return;
    case TermKind::Plus:
      print_term_wrapped(os, t->args[0], kSum);
      os << '+';
      print_term_wrapped(os, t->args[1], kProduct);
      return;
    case TermKind::Minus:
      print_term_wrapped(os, t->args[0], kSum);
      os << '-';
      print_term_wrapped(os, t->args[1], kProduct);
      return;
    case TermKind::Times:
      print_term_wrapped(os, t->args[0], kProduct);
      os << '*';
      print_term_wrapped(os, t->args[1], kUnary);
      return;
    case TermKind::Divide:
      print_term_wrapped(os, t->args[0], kProduct);
      os << '/';
      print_term_wrapped(os, t->args[1], kUnary);
      return;
    case TermKind::Neg:
      os << '-';
      // A literal directly after '-' would read back as a negative constant.
      if (t->args[0]->kind == TermKind::Const || term_prec(t->args[0]) < kUnary) {
        os << '(';
        print_term(os, t->args[0], 0);
        os << ')';
      } else {
        print_term(os, t->args[0], kUnary);
      }
      return;
    case TermKind::Power:
      print_term_wrapped(os, t->args[0], kAtom);
      os << '^';
      if (t->exponent < 0) {
        os << '-' << -t->exponent;
      } else {
        os << t->exponent;
      }
      return;
    case TermKind::Min:
    case TermKind::Max:
    case TermKind::Func: {
      os << (t->kind == TermKind::Min ? "min" : t->kind == TermKind::Max ? "max" : t->func) << '(';
      for (std::size_t i = 0; i < t->args.size(); ++i) {
        if (i) os << ',';
        print_term(os, t->args[i], 0);
      }
      os << ')';
      return;
    }
  }
}

enum FormulaPrec { kEquiv = 1, kImplies = 2, kOr = 3, kAnd = 4, kPrefix = 5, kFAtom = 6 };

int formula_prec(const Formula& f) {
  switch (f->kind) {
    case FormulaKind::Equiv: return kEquiv;
    case FormulaKind::Implies: return kImplies;
    case FormulaKind::Or: return kOr;
    case FormulaKind::And: return kAnd;
    case FormulaKind::Not:
    case FormulaKind::Forall:
    case FormulaKind::Exists:
    case FormulaKind::Box:
    case FormulaKind::Diamond: return kPrefix;
    default: return kFAtom;
  }
}

void print_program(std::ostream& os, const Program& p, int min_prec);
void print_formula(std::ostream& os, const Formula& f);

void print_formula_at(std::ostream& os, const Formula& f, int min_prec) {
  if (formula_prec(f) < min_prec) {
    os << '(';
    print_formula(os, f);
    os << ')';
  } else {
    print_formula(os, f);
  }
}

void print_formula(std::ostream& os, const Formula& f) {
  switch (f->kind) {
    case FormulaKind::True: os << "true"; return;
    case FormulaKind::False: os << "false"; return;
    case FormulaKind::Compare:
      print_term(os, f->lhs, 0);
      os << to_string(f->op);
      print_term(os, f->rhs, 0);
      return;
    case FormulaKind::Not:
      os << '!';
      print_formula_at(os, f->kids[0], kFAtom);
      return;
    case FormulaKind::And:
      print_formula_at(os, f->kids[0], kAnd + 1);
      os << " & ";
      print_formula_at(os, f->kids[1], kAnd);
      return;
    case FormulaKind::Or:
      print_formula_at(os, f->kids[0], kOr + 1);
      os << " | ";
      print_formula_at(os, f->kids[1], kOr);
      return;
    case FormulaKind::Implies:
      print_formula_at(os, f->kids[0], kImplies + 1);
      os << " -> ";
      print_formula_at(os, f->kids[1], kImplies);
      return;
    case FormulaKind::Equiv:
      print_formula_at(os, f->kids[0], kEquiv + 1);
      os << " <-> ";
      print_formula_at(os, f->kids[1], kEquiv);
      return;
    case FormulaKind::Forall:
    case FormulaKind::Exists:
      os << (f->kind == FormulaKind::Forall ? "\\forall " : "\\exists ") << f->var.key() << " (";
      print_formula(os, f->kids[0]);
      os << ')';
      return;
    case FormulaKind::Box:
      os << '[';
      print_program(os, f->program, 0);
      os << ']';
      print_formula_at(os, f->kids[0], kFAtom);
      return;
    case FormulaKind::Diamond:
      os << '<';
      print_program(os, f->program, 0);
      os << '>';
      print_formula_at(os, f->kids[0], kFAtom);
      return;
  }
}

enum ProgPrec { kChoice = 1, kSeq = 2, kPAtom = 3 };

int program_prec(const Program& p) {
  switch (p->kind) {
    case ProgramKind::Choice: return kChoice;
    case ProgramKind::Seq: return kSeq;
    default: return kPAtom;
  }
}

void print_program_at(std::ostream& os, const Program& p, int min_prec) {
  if (program_prec(p) < min_prec) {
    os << '{';
    print_program(os, p, 0);
    os << '}';
  } else {
    print_program(os, p, min_prec);
  }
}

void print_program(std::ostream& os, const Program& p, int) {
  switch (p->kind) {
    case ProgramKind::Assign:
      os << p->var << ":=";
      print_term(os, p->term, 0);
      return;
    case ProgramKind::AssignAny: os << p->var << ":=*"; return;
    case ProgramKind::Test:
      os << '?';
      print_formula_at(os, p->formula, kFAtom);
      return;
    case ProgramKind::Ode:
      os << '{';
      for (std::size_t i = 0; i < p->ode.size(); ++i) {
        if (i) os << ", ";
        os << p->ode[i].var << "'=";
        print_term(os, p->ode[i].rhs, 0);
      }
      if (p->formula->kind != FormulaKind::True) {
        os << " & ";
        print_formula(os, p->formula);
      }
      os << '}';
      return;
    case ProgramKind::Seq:
      print_program_at(os, p->kids[0], kSeq + 1);
      os << "; ";
      print_program_at(os, p->kids[1], kSeq);
      return;
    case ProgramKind::Choice:
      print_program_at(os, p->kids[0], kChoice + 1);
      os << " ++ ";
      print_program_at(os, p->kids[1], kChoice);
      return;
    case ProgramKind::Loop:
      os << '{';
      print_program(os, p->kids[0], 0);
      os << "}*";
      return;
  }
}

}  // namespace

Term parse_term(std::string_view text) {
  Parser p(text);
  Term t = p.term();
  p.finish();
  return t;
}

Formula parse_formula(std::string_view text) {
  Parser p(text);
  Formula f = p.formula();
  p.finish();
  return f;
}

Program parse_program(std::string_view text) {
  Parser p(text);
  Program prog = p.program();
  p.finish();
  return prog;
}

std::string to_string(const Term& t) {
  std::ostringstream os;
  print_term(os, t, 0);
  return os.str();
}

std::string to_string(const Formula& f) {
  std::ostringstream os;
  print_formula(os, f);
  return os.str();
}

std::string to_string(const Program& p) {
  std::ostringstream os;
  print_program(os, p, 0);
  return os.str();
}

}  // namespace hsmon
