#include "geotomo/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "geotomo/errors.hpp"

namespace geotomo {

namespace {

struct Token {
  enum Type { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End } type;
  double value = 0.0;
  std::string_view text;
  size_t offset = 0;
};

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

private:
  std::string_view src_;
  size_t pos_ = 0;
  Token tok_;

  void advance() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    tok_.offset = pos_;
    if (pos_ >= src_.size()) {
      tok_.type = Token::End;
      return;
    }
    const char c = src_[pos_];
    switch (c) {
      case '+': tok_.type = Token::Plus; ++pos_; return;
      case '-': tok_.type = Token::Minus; ++pos_; return;
      case '*': tok_.type = Token::Star; ++pos_; return;
      case '/': tok_.type = Token::Slash; ++pos_; return;
      case '^': tok_.type = Token::Caret; ++pos_; return;
      case '(': tok_.type = Token::LParen; ++pos_; return;
      case ')': tok_.type = Token::RParen; ++pos_; return;
      case ',': tok_.type = Token::Comma; ++pos_; return;
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src_.data() + pos_;
      char* end = nullptr;
      errno = 0;
      tok_.value = std::strtod(begin, &end);
      if (end == begin) throw ParseError("malformed number", pos_);
      tok_.type = Token::Number;
      tok_.text = src_.substr(pos_, static_cast<size_t>(end - begin));
      pos_ += static_cast<size_t>(end - begin);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t end = pos_;
      while (end < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[end])) || src_[end] == '_'))
        ++end;
      tok_.type = Token::Ident;
      tok_.text = src_.substr(pos_, end - pos_);
      pos_ = end;
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos_);
  }
};

// Binding powers; Pow wins over unary minus, Pow is right-associative.
constexpr int BP_ADD = 10;
constexpr int BP_MUL = 20;
constexpr int BP_NEG = 30;
constexpr int BP_POW = 40;

class Parser {
public:
  explicit Parser(std::string_view src) : lex_(src) {}

  int32_t parse_all(std::vector<Expr::Node>& nodes) {
    nodes_ = &nodes;
    const int32_t root = parse_expr(0);
    const Token& t = lex_.peek();
    if (t.type != Token::End) throw ParseError("trailing input", t.offset);
    return root;
  }

private:
  Lexer lex_;
  std::vector<Expr::Node>* nodes_ = nullptr;

  int32_t push(Expr::Node n) {
    nodes_->push_back(n);
    return static_cast<int32_t>(nodes_->size() - 1);
  }

  int32_t leaf(Expr::Kind k, double v, size_t off) {
    return push({k, Expr::UnOp::Neg, Expr::BinOp::Add, static_cast<uint32_t>(off), v, -1, -1});
  }

  int32_t parse_primary() {
    Token t = lex_.take();
    switch (t.type) {
      case Token::Number:
        return leaf(Expr::Kind::Constant, t.value, t.offset);
      case Token::Minus: {
        const int32_t a = parse_expr(BP_NEG);
        return push({Expr::Kind::Unary, Expr::UnOp::Neg, Expr::BinOp::Add,
                     static_cast<uint32_t>(t.offset), 0.0, a, -1});
      }
      case Token::LParen: {
        const int32_t a = parse_expr(0);
        const Token close = lex_.take();
        if (close.type != Token::RParen) throw ParseError("expected ')'", close.offset);
        return a;
      }
      case Token::Ident: {
        if (t.text == "x") return leaf(Expr::Kind::VarX, 0.0, t.offset);
        if (t.text == "y") return leaf(Expr::Kind::VarY, 0.0, t.offset);
        if (t.text == "pi") return leaf(Expr::Kind::Constant, M_PI, t.offset);
        if (t.text == "e") return leaf(Expr::Kind::Constant, M_E, t.offset);
        Expr::UnOp op;
        if (t.text == "exp") op = Expr::UnOp::Exp;
        else if (t.text == "sin") op = Expr::UnOp::Sin;
        else if (t.text == "cos") op = Expr::UnOp::Cos;
        else if (t.text == "sqrt") op = Expr::UnOp::Sqrt;
        else if (t.text == "log") op = Expr::UnOp::Log;
        else throw ParseError("unknown identifier '" + std::string(t.text) + "'", t.offset);
        const Token open = lex_.take();
        if (open.type != Token::LParen)
          throw ParseError("expected '(' after function name", open.offset);
        const int32_t a = parse_expr(0);
        const Token close = lex_.take();
        if (close.type != Token::RParen) throw ParseError("expected ')'", close.offset);
        return push({Expr::Kind::Unary, op, Expr::BinOp::Add,
                     static_cast<uint32_t>(t.offset), 0.0, a, -1});
      }
      default:
        throw ParseError("expected an operand", t.offset);
    }
  }

  int32_t parse_expr(int min_bp) {
    int32_t lhs = parse_primary();
    for (;;) {
      const Token& t = lex_.peek();
      Expr::BinOp op;
      int bp;
      switch (t.type) {
        case Token::Plus: op = Expr::BinOp::Add; bp = BP_ADD; break;
        case Token::Minus: op = Expr::BinOp::Sub; bp = BP_ADD; break;
        case Token::Star: op = Expr::BinOp::Mul; bp = BP_MUL; break;
        case Token::Slash: op = Expr::BinOp::Div; bp = BP_MUL; break;
        case Token::Caret: op = Expr::BinOp::Pow; bp = BP_POW; break;
        default: return lhs;
      }
      if (bp < min_bp) return lhs;
      const Token taken = lex_.take();
      // right-associative ^: recurse at bp, left-associative others at bp+1
      const int32_t rhs = parse_expr(op == Expr::BinOp::Pow ? bp : bp + 1);
      lhs = push({Expr::Kind::Binary, Expr::UnOp::Neg, op,
                  static_cast<uint32_t>(taken.offset), 0.0, lhs, rhs});
    }
  }
};

} // namespace

Expr Expr::parse(std::string_view src) {
  Expr e;
  e.source_ = std::string(src);
  Parser p(src);
  e.root_ = p.parse_all(e.nodes_);
  return e;
}

template <class T>
T Expr::eval_t(double x, double y) const {
  std::vector<T> vals(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    try {
      switch (n.kind) {
        case Kind::Constant: vals[i] = make_const<T>(n.value); break;
        case Kind::VarX: vals[i] = make_x<T>(x); break;
        case Kind::VarY: vals[i] = make_y<T>(y); break;
        case Kind::Unary: {
          const T& a = vals[n.a];
          switch (n.uop) {
            case UnOp::Neg: vals[i] = -a; break;
            case UnOp::Exp: vals[i] = j_exp(a); break;
            case UnOp::Sin: vals[i] = j_sin(a); break;
            case UnOp::Cos: vals[i] = j_cos(a); break;
            case UnOp::Sqrt: vals[i] = j_sqrt(a); break;
            case UnOp::Log: vals[i] = j_log(a); break;
          }
          break;
        }
        case Kind::Binary: {
          const T& a = vals[n.a];
          const T& b = vals[n.b];
          switch (n.bop) {
            case BinOp::Add: vals[i] = a + b; break;
            case BinOp::Sub: vals[i] = a - b; break;
            case BinOp::Mul: vals[i] = a * b; break;
            case BinOp::Div:
              if (value_of(b) == 0.0) jet_detail::fail("division by zero");
              vals[i] = a / b;
              break;
            case BinOp::Pow: vals[i] = j_pow(a, b); break;
          }
          break;
        }
      }
    } catch (const JetDomainError& err) {
      throw EvalError(err.what(), n.offset);
    }
  }
  return vals[root_];
}

double Expr::eval(double x, double y) const { return eval_t<double>(x, y); }
Grad Expr::eval_grad(double x, double y) const { return eval_t<Grad>(x, y); }
Jet2 Expr::eval_jet(double x, double y) const { return eval_t<Jet2>(x, y); }

namespace {
int bin_prec(Expr::BinOp op) {
  switch (op) {
    case Expr::BinOp::Add:
    case Expr::BinOp::Sub: return BP_ADD;
    case Expr::BinOp::Mul:
    case Expr::BinOp::Div: return BP_MUL;
    case Expr::BinOp::Pow: return BP_POW;
  }
  return 0;
}
const char* bin_sym(Expr::BinOp op) {
  switch (op) {
    case Expr::BinOp::Add: return " + ";
    case Expr::BinOp::Sub: return " - ";
    case Expr::BinOp::Mul: return "*";
    case Expr::BinOp::Div: return "/";
    case Expr::BinOp::Pow: return "^";
  }
  return "";
}
const char* un_name(Expr::UnOp op) {
  switch (op) {
    case Expr::UnOp::Neg: return "-";
    case Expr::UnOp::Exp: return "exp";
    case Expr::UnOp::Sin: return "sin";
    case Expr::UnOp::Cos: return "cos";
    case Expr::UnOp::Sqrt: return "sqrt";
    case Expr::UnOp::Log: return "log";
  }
  return "";
}

void format_double(double v, std::string& out) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}
} // namespace

void Expr::print_node(int32_t idx, int parent_prec, bool rhs_of_binary, std::string& out) const {
  const Node& n = nodes_[idx];
  switch (n.kind) {
    case Kind::Constant:
      if (n.value < 0) {
        out += '(';
        format_double(n.value, out);
        out += ')';
      } else {
        format_double(n.value, out);
      }
      return;
    case Kind::VarX: out += 'x'; return;
    case Kind::VarY: out += 'y'; return;
    case Kind::Unary:
      if (n.uop == UnOp::Neg) {
        const bool need = parent_prec > BP_NEG;
        if (need) out += '(';
        out += '-';
        print_node(n.a, BP_NEG, false, out);
        if (need) out += ')';
      } else {
        out += un_name(n.uop);
        out += '(';
        print_node(n.a, 0, false, out);
        out += ')';
      }
      return;
    case Kind::Binary: {
      const int prec = bin_prec(n.bop);
      // Parenthesize when the parent binds tighter, or equally tight on the
      // side that would re-associate differently.
      const bool need = parent_prec > prec || (parent_prec == prec && rhs_of_binary);
      if (need) out += '(';
      const bool pow = n.bop == BinOp::Pow;
      print_node(n.a, pow ? prec + 1 : prec, false, out);
      out += bin_sym(n.bop);
      print_node(n.b, pow ? prec : prec + 1, true, out);
      if (need) out += ')';
      return;
    }
  }
}

std::string Expr::pretty() const {
  std::string out;
  print_node(root_, 0, false, out);
  return out;
}

bool Expr::structurally_equal(const Expr& other) const {
  // Compare trees by recursive shape from the roots; vector layout may differ.
  struct Cmp {
    const std::vector<Node>& a;
    const std::vector<Node>& b;
    bool eq(int32_t i, int32_t j) const {
      const Node& m = a[i];
      const Node& n = b[j];
      if (m.kind != n.kind) return false;
      switch (m.kind) {
        case Kind::Constant: return m.value == n.value;
        case Kind::VarX:
        case Kind::VarY: return true;
        case Kind::Unary: return m.uop == n.uop && eq(m.a, n.a);
        case Kind::Binary: return m.bop == n.bop && eq(m.a, n.a) && eq(m.b, n.b);
      }
      return false;
    }
  };
  if (root_ < 0 || other.root_ < 0) return root_ == other.root_;
  return Cmp{nodes_, other.nodes_}.eq(root_, other.root_);
}

} // namespace geotomo
