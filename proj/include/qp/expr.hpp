#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qp {

struct ExprError : std::runtime_error {
  std::size_t position;
  ExprError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg), position(pos) {}
};

// Arithmetic expressions in the variables x1..xd with + - * / ^ (power is
// right-associative and binds tighter than unary minus), the functions
// sin cos exp sqrt tanh, parentheses and numeric literals. Parsed once into
// a postfix program; evaluation is allocation-free and reentrant.
class Expression {
 public:
  Expression() = default;

  // Throws ExprError (with byte offset into `text`) on malformed input.
  static Expression parse(std::string_view text, int dim);

  // Constant expression with the given value.
  static Expression constant(double value);

  double eval(std::span<const double> x) const;

  // True when the program references no variables.
  bool is_constant() const;

  int dim() const { return dim_; }
  const std::string& text() const { return text_; }

 private:
  enum class Op : std::uint8_t {
    Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Sqrt, Tanh
  };
  struct Instr {
    Op op;
    double value = 0.0;   // Const
    std::int32_t var = 0; // Var (0-based)
  };

  friend class ExprParser;

  std::vector<Instr> prog_;
  int dim_ = 0;
  std::string text_;
};

}  // namespace qp
