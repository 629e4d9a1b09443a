#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "geotomo/jet.hpp"

namespace geotomo {

// Parsed scalar expression in the variables x, y.
//
// Grammar: numbers, x, y, pi, e, unary minus, exp/sin/cos/sqrt/log,
// binary + - * / ^ with the usual precedence, ^ right-associative and
// binding tighter than unary minus.  Nodes live in a flat vector; the
// tree is immutable after parse.
class Expr {
public:
  enum class Kind : uint8_t { Constant, VarX, VarY, Unary, Binary };
  enum class UnOp : uint8_t { Neg, Exp, Sin, Cos, Sqrt, Log };
  enum class BinOp : uint8_t { Add, Sub, Mul, Div, Pow };

  struct Node {
    Kind kind;
    UnOp uop;
    BinOp bop;
    uint32_t offset; // byte offset in the source, for diagnostics
    double value;    // Kind::Constant
    int32_t a, b;    // child indices, -1 if unused
  };

  // Throws ParseError with a byte offset on malformed input.
  static Expr parse(std::string_view src);

  double eval(double x, double y) const;  // value only
  Grad eval_grad(double x, double y) const; // value + gradient
  Jet2 eval_jet(double x, double y) const;  // value + gradient + Hessian

  // Round-trippable text form: parse(pretty()) yields an identical tree.
  std::string pretty() const;

  const std::string& source() const { return source_; }
  bool structurally_equal(const Expr& other) const;

private:
  std::vector<Node> nodes_;
  int32_t root_ = -1;
  std::string source_;

  template <class T> T eval_t(double x, double y) const;
  void print_node(int32_t idx, int parent_prec, bool rhs_of_binary, std::string& out) const;
};

} // namespace geotomo
