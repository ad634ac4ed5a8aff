#include "qp/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

namespace qp {

namespace {
constexpr int kMaxStack = 64;
}

class ExprParser {
 public:
  ExprParser(std::string_view text, int dim, Expression& out)
      : text_(text), dim_(dim), out_(out) {}

  void run() {
    parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    if (out_.prog_.empty()) fail("empty expression");
  }

 private:
  using Op = Expression::Op;

  void emit(Op op, double value = 0.0, std::int32_t var = 0) {
    out_.prog_.push_back({op, value, var});
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ExprError(msg + " at offset " + std::to_string(pos_), pos_);
  }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  // expr := term (('+'|'-') term)*
  void parse_expr() {
    parse_term();
    for (;;) {
      if (eat('+')) {
        parse_term();
        emit(Op::Add);
      } else if (eat('-')) {
        parse_term();
        emit(Op::Sub);
      } else {
        return;
      }
    }
  }

  // term := factor (('*'|'/') factor)*
  void parse_term() {
    parse_factor();
    for (;;) {
      if (eat('*')) {
        parse_factor();
        emit(Op::Mul);
      } else if (eat('/')) {
        parse_factor();
        emit(Op::Div);
      } else {
        return;
      }
    }
  }

  // factor := '-' factor | power      (so -x^2 parses as -(x^2))
  void parse_factor() {
    if (eat('-')) {
      parse_factor();
      emit(Op::Neg);
      return;
    }
    parse_power();
  }

  // power := atom ('^' factor)?       (right-associative, exponent may be signed)
  void parse_power() {
    parse_atom();
    if (eat('^')) {
      parse_factor();
      emit(Op::Pow);
    }
  }

  void parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of expression");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      parse_expr();
      if (!eat(')')) fail("expected ')'");
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      parse_number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      parse_ident();
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  void parse_number() {
    double value = 0.0;
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc()) fail("malformed numeric literal");
    pos_ += static_cast<std::size_t>(ptr - begin);
    emit(Op::Const, value);
  }

  void parse_ident() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
      ++pos_;
    }
    const std::string_view name = text_.substr(start, pos_ - start);

    if (name.size() >= 2 && name[0] == 'x' &&
        std::isdigit(static_cast<unsigned char>(name[1]))) {
      int index = 0;
      auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), index);
      if (ec == std::errc() && ptr == name.data() + name.size()) {
        if (index < 1 || index > dim_) {
          pos_ = start;
          fail("variable " + std::string(name) + " out of range for dimension " +
               std::to_string(dim_));
        }
        emit(Op::Var, 0.0, index - 1);
        return;
      }
    }

    Op fn;
    if (name == "sin") fn = Op::Sin;
    else if (name == "cos") fn = Op::Cos;
    else if (name == "exp") fn = Op::Exp;
    else if (name == "sqrt") fn = Op::Sqrt;
    else if (name == "tanh") fn = Op::Tanh;
    else {
      pos_ = start;
      fail("unknown identifier '" + std::string(name) + "'");
    }
    if (!eat('(')) fail("expected '(' after function name");
    parse_expr();
    if (!eat(')')) fail("expected ')'");
    emit(fn);
  }

  std::string_view text_;
  int dim_;
  Expression& out_;
  std::size_t pos_ = 0;
};

Expression Expression::parse(std::string_view text, int dim) {
  if (dim < 1) throw ExprError("dimension must be positive", 0);
  Expression e;
  e.dim_ = dim;
  e.text_ = std::string(text);
  ExprParser(text, dim, e).run();

  // Verify stack discipline once at parse time so eval() can use a fixed buffer.
  int depth = 0, peak = 0;
  for (const Instr& in : e.prog_) {
    switch (in.op) {
      case Op::Const:
      case Op::Var:
        ++depth;
        break;
      case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Pow:
        --depth;
        break;
      default:  // unary
        break;
    }
    peak = std::max(peak, depth);
  }
  if (peak > kMaxStack) throw ExprError("expression nests too deeply", 0);
  return e;
}

Expression Expression::constant(double value) {
  Expression e;
  e.dim_ = 1;
  e.text_ = std::to_string(value);
  e.prog_.push_back({Op::Const, value, 0});
  return e;
}

double Expression::eval(std::span<const double> x) const {
  double st[kMaxStack];
  int top = -1;
  for (const Instr& in : prog_) {
    switch (in.op) {
      case Op::Const: st[++top] = in.value; break;
      case Op::Var:   st[++top] = x[static_cast<std::size_t>(in.var)]; break;
      case Op::Add:   st[top - 1] += st[top]; --top; break;
      case Op::Sub:   st[top - 1] -= st[top]; --top; break;
      case Op::Mul:   st[top - 1] *= st[top]; --top; break;
      case Op::Div:   st[top - 1] /= st[top]; --top; break;
      case Op::Pow:   st[top - 1] = std::pow(st[top - 1], st[top]); --top; break;
      case Op::Neg:   st[top] = -st[top]; break;
      case Op::Sin:   st[top] = std::sin(st[top]); break;
      case Op::Cos:   st[top] = std::cos(st[top]); break;
      case Op::Exp:   st[top] = std::exp(st[top]); break;
      case Op::Sqrt:  st[top] = std::sqrt(st[top]); break;
      case Op::Tanh:  st[top] = std::tanh(st[top]); break;
    }
  }
  return st[0];
}

bool Expression::is_constant() const {
  for (const Instr& in : prog_)
    if (in.op == Op::Var) return false;
  return true;
}

}  // namespace qp
