#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace agediff {

// Arithmetic rate expressions in the variables z (weighted population),
// a (age), x (position). Parsed once, evaluated many times; immutable and
// safe to share across threads.

class ExprError : public std::runtime_error {
public:
    ExprError(const std::string& msg, size_t offset)
        : std::runtime_error(msg + " (offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    size_t offset() const { return offset_; }

private:
    size_t offset_;
};

class ParseError : public ExprError {
    using ExprError::ExprError;
};
class EvalError : public ExprError {
    using ExprError::ExprError;
};
class DiffError : public ExprError {
    using ExprError::ExprError;
};

namespace expr_detail {

enum class Op : uint8_t { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Call1, Call2 };
enum class Fn1 : uint8_t { Exp, Log, Sin, Cos, Sqrt, Abs };
enum class Fn2 : uint8_t { Min, Max };

struct Node {
    Op op;
    int lhs = -1;
    int rhs = -1;
    double value = 0.0;  // Const
    char var = 0;        // Var: 'z', 'a', 'x'
    int ipow = 0;        // Pow exponent
    Fn1 f1 = Fn1::Exp;
    Fn2 f2 = Fn2::Min;
    uint32_t offset = 0;  // source byte offset, kept for diagnostics
};

inline const char* fn1_name(Fn1 f) {
    switch (f) {
        case Fn1::Exp: return "exp";
        case Fn1::Log: return "log";
        case Fn1::Sin: return "sin";
        case Fn1::Cos: return "cos";
        case Fn1::Sqrt: return "sqrt";
        case Fn1::Abs: return "abs";
    }
    return "?";
}
inline const char* fn2_name(Fn2 f) { return f == Fn2::Min ? "min" : "max"; }

inline double ipow_eval(double base, int n, uint32_t off) {
    if (n < 0) {
        if (base == 0.0) throw EvalError("division by zero in negative power", off);
        return 1.0 / ipow_eval(base, -n, off);
    }
    double r = 1.0, b = base;
    unsigned e = static_cast<unsigned>(n);
    while (e) {
        if (e & 1u) r *= b;
        b *= b;
        e >>= 1u;
    }
    return r;
}

// Tree builder with the basic algebraic simplifications used by diff_z:
// 0*e -> 0, 1*e -> e, e+0 -> e, e^1 -> e, constant folding on +,-,*,neg.
class Builder {
public:
    std::vector<Node> nodes;

    bool is_const(int i, double v) const {
        return nodes[i].op == Op::Const && nodes[i].value == v;
    }
    bool is_const(int i) const { return nodes[i].op == Op::Const; }
    double cval(int i) const { return nodes[i].value; }

    int mk_const(double v, uint32_t off = 0) {
        Node n;
        n.op = Op::Const;
        n.value = v;
        n.offset = off;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }
    int mk_var(char v, uint32_t off = 0) {
        Node n;
        n.op = Op::Var;
        n.var = v;
        n.offset = off;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }
    int mk_add(int a, int b, uint32_t off = 0) {
        if (is_const(a, 0.0)) return b;
        if (is_const(b, 0.0)) return a;
        if (is_const(a) && is_const(b)) return mk_const(cval(a) + cval(b), off);
        return mk_bin(Op::Add, a, b, off);
    }
    int mk_sub(int a, int b, uint32_t off = 0) {
        if (is_const(b, 0.0)) return a;
        if (is_const(a) && is_const(b)) return mk_const(cval(a) - cval(b), off);
        if (is_const(a, 0.0)) return mk_neg(b, off);
        return mk_bin(Op::Sub, a, b, off);
    }
    int mk_mul(int a, int b, uint32_t off = 0) {
        if (is_const(a, 0.0) || is_const(b, 0.0)) return mk_const(0.0, off);
        if (is_const(a, 1.0)) return b;
        if (is_const(b, 1.0)) return a;
        if (is_const(a) && is_const(b)) return mk_const(cval(a) * cval(b), off);
        return mk_bin(Op::Mul, a, b, off);
    }
    int mk_div(int a, int b, uint32_t off = 0) {
        if (is_const(a, 0.0)) return mk_const(0.0, off);
        if (is_const(b, 1.0)) return a;
        if (is_const(a) && is_const(b) && cval(b) != 0.0)
            return mk_const(cval(a) / cval(b), off);
        return mk_bin(Op::Div, a, b, off);
    }
    int mk_pow(int a, int p, uint32_t off = 0) {
        if (p == 0) return mk_const(1.0, off);
        if (p == 1) return a;
        if (is_const(a)) return mk_const(ipow_eval(cval(a), p, off), off);
        Node n;
        n.op = Op::Pow;
        n.lhs = a;
        n.ipow = p;
        n.offset = off;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }
    int mk_neg(int a, uint32_t off = 0) {
        if (is_const(a)) return mk_const(-cval(a), off);
        if (nodes[a].op == Op::Neg) return nodes[a].lhs;
        Node n;
        n.op = Op::Neg;
        n.lhs = a;
        n.offset = off;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }
    int mk_call1(Fn1 f, int a, uint32_t off = 0) {
        Node n;
        n.op = Op::Call1;
        n.f1 = f;
        n.lhs = a;
        n.offset = off;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }
    int mk_call2(Fn2 f, int a, int b, uint32_t off = 0) {
        Node n;
        n.op = Op::Call2;
        n.f2 = f;
        n.lhs = a;
        n.rhs = b;
        n.offset = off;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }

    int copy_subtree(const std::vector<Node>& src, int idx) {
        const Node& n = src[idx];
        switch (n.op) {
            case Op::Const: return mk_const(n.value, n.offset);
            case Op::Var: return mk_var(n.var, n.offset);
            case Op::Neg: {
                int a = copy_subtree(src, n.lhs);
                Node m;
                m.op = Op::Neg;
                m.lhs = a;
                m.offset = n.offset;
                nodes.push_back(m);
                return static_cast<int>(nodes.size()) - 1;
            }
            case Op::Pow: {
                int a = copy_subtree(src, n.lhs);
                Node m;
                m.op = Op::Pow;
                m.lhs = a;
                m.ipow = n.ipow;
                m.offset = n.offset;
                nodes.push_back(m);
                return static_cast<int>(nodes.size()) - 1;
            }
            case Op::Call1: {
                int a = copy_subtree(src, n.lhs);
                return mk_call1(n.f1, a, n.offset);
            }
            case Op::Call2: {
                int a = copy_subtree(src, n.lhs);
                int b = copy_subtree(src, n.rhs);
                return mk_call2(n.f2, a, b, n.offset);
            }
            default: {
                int a = copy_subtree(src, n.lhs);
                int b = copy_subtree(src, n.rhs);
                Node m;
                m.op = n.op;
                m.lhs = a;
                m.rhs = b;
                m.offset = n.offset;
                nodes.push_back(m);
                return static_cast<int>(nodes.size()) - 1;
            }
        }
    }

private:
    int mk_bin(Op op, int a, int b, uint32_t off) {
        Node n;
        n.op = op;
        n.lhs = a;
        n.rhs = b;
        n.offset = off;
        nodes.push_back(n);
        return static_cast<int>(nodes.size()) - 1;
    }
};

}  // namespace expr_detail

class RateExpr {
    using Node = expr_detail::Node;
    using Op = expr_detail::Op;
    using Fn1 = expr_detail::Fn1;
    using Fn2 = expr_detail::Fn2;

public:
    RateExpr() = default;

    static RateExpr parse(std::string_view text) {
        Parser p(text);
        int root = p.parse_expr();
        p.skip_ws();
        if (!p.at_end()) throw ParseError("unexpected trailing input", p.pos());
        RateExpr e;
        e.source_ = std::string(text);
        e.nodes_ = std::make_shared<const std::vector<Node>>(std::move(p.builder.nodes));
        e.root_ = root;
        return e;
    }

    bool valid() const { return nodes_ != nullptr; }
    const std::string& source() const { return source_; }

    double eval(double z, double a, double x) const {
        return eval_node(root_, z, a, x);
    }

    bool uses(char var) const { return uses_node(root_, var); }
    bool uses_z() const { return uses('z'); }

    // Symbolic partial derivative in z with basic simplification. Subtrees
    // that do not mention z differentiate to 0 without inspection, so
    // abs/min/max are rejected only where z actually flows through them.
    RateExpr diff_z() const {
        expr_detail::Builder b;
        int droot = diff_node(b, root_);
        RateExpr e;
        e.nodes_ = std::make_shared<const std::vector<Node>>(std::move(b.nodes));
        e.root_ = droot;
        e.source_ = e.print();
        return e;
    }

    std::string print() const {
        std::string out;
        print_node(root_, 0, false, out);
        return out;
    }

    bool structurally_equal(const RateExpr& o) const {
        return eq_node(root_, o, o.root_);
    }

private:
    std::string source_;
    std::shared_ptr<const std::vector<Node>> nodes_;
    int root_ = -1;

    const Node& at(int i) const { return (*nodes_)[i]; }

    double eval_node(int idx, double z, double a, double x) const {
        const Node& n = at(idx);
        switch (n.op) {
            case Op::Const: return n.value;
            case Op::Var: return n.var == 'z' ? z : (n.var == 'a' ? a : x);
            case Op::Add: return eval_node(n.lhs, z, a, x) + eval_node(n.rhs, z, a, x);
            case Op::Sub: return eval_node(n.lhs, z, a, x) - eval_node(n.rhs, z, a, x);
            case Op::Mul: return eval_node(n.lhs, z, a, x) * eval_node(n.rhs, z, a, x);
            case Op::Div: {
                double den = eval_node(n.rhs, z, a, x);
                if (den == 0.0) throw EvalError("division by zero", at(n.rhs).offset);
                return eval_node(n.lhs, z, a, x) / den;
            }
            case Op::Pow:
                return expr_detail::ipow_eval(eval_node(n.lhs, z, a, x), n.ipow, n.offset);
            case Op::Neg: return -eval_node(n.lhs, z, a, x);
            case Op::Call1: {
                double v = eval_node(n.lhs, z, a, x);
                switch (n.f1) {
                    case Fn1::Exp: return std::exp(v);
                    case Fn1::Log:
                        if (v <= 0.0) throw EvalError("log of non-positive value", n.offset);
                        return std::log(v);
                    case Fn1::Sin: return std::sin(v);
                    case Fn1::Cos: return std::cos(v);
                    case Fn1::Sqrt:
                        if (v < 0.0) throw EvalError("sqrt of negative value", n.offset);
                        return std::sqrt(v);
                    case Fn1::Abs: return std::fabs(v);
                }
                return 0.0;
            }
            case Op::Call2: {
                double u = eval_node(n.lhs, z, a, x);
                double v = eval_node(n.rhs, z, a, x);
                return n.f2 == Fn2::Min ? std::fmin(u, v) : std::fmax(u, v);
            }
        }
        return 0.0;
    }

    bool uses_node(int idx, char var) const {
        const Node& n = at(idx);
        if (n.op == Op::Var) return n.var == var;
        if (n.op == Op::Const) return false;
        bool u = n.lhs >= 0 && uses_node(n.lhs, var);
        if (!u && n.rhs >= 0) u = uses_node(n.rhs, var);
        return u;
    }

    int diff_node(expr_detail::Builder& b, int idx) const {
        const Node& n = at(idx);
        if (!uses_node(idx, 'z')) return b.mk_const(0.0, n.offset);
        switch (n.op) {
            case Op::Const: return b.mk_const(0.0, n.offset);
            case Op::Var: return b.mk_const(n.var == 'z' ? 1.0 : 0.0, n.offset);
            case Op::Add:
                return b.mk_add(diff_node(b, n.lhs), diff_node(b, n.rhs), n.offset);
            case Op::Sub:
                return b.mk_sub(diff_node(b, n.lhs), diff_node(b, n.rhs), n.offset);
            case Op::Mul: {
                int du = diff_node(b, n.lhs);
                int dv = diff_node(b, n.rhs);
                int u = b.copy_subtree(*nodes_, n.lhs);
                int v = b.copy_subtree(*nodes_, n.rhs);
                return b.mk_add(b.mk_mul(du, v, n.offset), b.mk_mul(u, dv, n.offset),
                                n.offset);
            }
            case Op::Div: {
                int du = diff_node(b, n.lhs);
                int dv = diff_node(b, n.rhs);
                int u = b.copy_subtree(*nodes_, n.lhs);
                int v = b.copy_subtree(*nodes_, n.rhs);
                int num = b.mk_sub(b.mk_mul(du, v, n.offset), b.mk_mul(u, dv, n.offset),
                                   n.offset);
                int v2 = b.mk_pow(b.copy_subtree(*nodes_, n.rhs), 2, n.offset);
                return b.mk_div(num, v2, n.offset);
            }
            case Op::Pow: {
                // d/dz u^n = n * u^(n-1) * u'
                int du = diff_node(b, n.lhs);
                int u = b.copy_subtree(*nodes_, n.lhs);
                int c = b.mk_const(static_cast<double>(n.ipow), n.offset);
                return b.mk_mul(b.mk_mul(c, b.mk_pow(u, n.ipow - 1, n.offset), n.offset),
                                du, n.offset);
            }
            case Op::Neg: return b.mk_neg(diff_node(b, n.lhs), n.offset);
            case Op::Call1: {
                if (n.f1 == Fn1::Abs)
                    throw DiffError("abs is not differentiable in z", n.offset);
                int du = diff_node(b, n.lhs);
                int u = b.copy_subtree(*nodes_, n.lhs);
                switch (n.f1) {
                    case Fn1::Exp:
                        return b.mk_mul(b.mk_call1(Fn1::Exp, u, n.offset), du, n.offset);
                    case Fn1::Log: return b.mk_div(du, u, n.offset);
                    case Fn1::Sin:
                        return b.mk_mul(b.mk_call1(Fn1::Cos, u, n.offset), du, n.offset);
                    case Fn1::Cos:
                        return b.mk_neg(
                            b.mk_mul(b.mk_call1(Fn1::Sin, u, n.offset), du, n.offset),
                            n.offset);
                    case Fn1::Sqrt: {
                        int two_sqrt = b.mk_mul(b.mk_const(2.0, n.offset),
                                                b.mk_call1(Fn1::Sqrt, u, n.offset),
                                                n.offset);
                        return b.mk_div(du, two_sqrt, n.offset);
                    }
                    default: break;
                }
                throw DiffError("non-differentiable primitive", n.offset);
            }
            case Op::Call2:
                throw DiffError(std::string(expr_detail::fn2_name(n.f2)) +
                                    " is not differentiable in z",
                                n.offset);
        }
        throw DiffError("non-differentiable primitive", n.offset);
    }

    // precedence: +,- (1)  *,/ (2)  unary- (3)  ^ (4)  atoms (5)
    static int prec_of(Op op) {
        switch (op) {
            case Op::Add:
            case Op::Sub: return 1;
            case Op::Mul:
            case Op::Div: return 2;
            case Op::Neg: return 3;
            case Op::Pow: return 4;
            default: return 5;
        }
    }

    static std::string fmt_double(double v) {
        char buf[40];
        auto r = std::to_chars(buf, buf + sizeof buf, v);
        return std::string(buf, r.ptr);
    }

    void print_node(int idx, int parent_prec, bool right_of_noncommutative,
                    std::string& out) const {
        const Node& n = at(idx);
        int p = prec_of(n.op);
        bool parens = p < parent_prec ||
                      (p == parent_prec && right_of_noncommutative);
        // a negative literal under ^ or as a standalone base must keep its sign
        if (n.op == Op::Const && n.value < 0.0 && parent_prec >= 2) parens = true;
        if (parens) out += '(';
        switch (n.op) {
            case Op::Const: out += fmt_double(n.value); break;
            case Op::Var: out += n.var; break;
            case Op::Add:
                print_node(n.lhs, 1, false, out);
                out += '+';
                print_node(n.rhs, 1, true, out);
                break;
            case Op::Sub:
                print_node(n.lhs, 1, false, out);
                out += '-';
                print_node(n.rhs, 1, true, out);
                break;
            case Op::Mul:
                print_node(n.lhs, 2, false, out);
                out += '*';
                print_node(n.rhs, 2, true, out);
                break;
            case Op::Div:
                print_node(n.lhs, 2, false, out);
                out += '/';
                print_node(n.rhs, 2, true, out);
                break;
            case Op::Neg:
                out += '-';
                print_node(n.lhs, 3, true, out);
                break;
            case Op::Pow:
                print_node(n.lhs, 5, false, out);
                out += '^';
                if (n.ipow < 0) {
                    out += '(';
                    out += std::to_string(n.ipow);
                    out += ')';
                } else {
                    out += std::to_string(n.ipow);
                }
                break;
            case Op::Call1:
                out += expr_detail::fn1_name(n.f1);
                out += '(';
                print_node(n.lhs, 0, false, out);
                out += ')';
                break;
            case Op::Call2:
                out += expr_detail::fn2_name(n.f2);
                out += '(';
                print_node(n.lhs, 0, false, out);
                out += ',';
                print_node(n.rhs, 0, false, out);
                out += ')';
                break;
        }
        if (parens) out += ')';
    }

    bool eq_node(int i, const RateExpr& o, int j) const {
        const Node& a = at(i);
        const Node& b = o.at(j);
        if (a.op != b.op) return false;
        switch (a.op) {
            case Op::Const: return a.value == b.value;
            case Op::Var: return a.var == b.var;
            case Op::Pow: return a.ipow == b.ipow && eq_node(a.lhs, o, b.lhs);
            case Op::Neg: return eq_node(a.lhs, o, b.lhs);
            case Op::Call1: return a.f1 == b.f1 && eq_node(a.lhs, o, b.lhs);
            case Op::Call2:
                return a.f2 == b.f2 && eq_node(a.lhs, o, b.lhs) && eq_node(a.rhs, o, b.rhs);
            default: return eq_node(a.lhs, o, b.lhs) && eq_node(a.rhs, o, b.rhs);
        }
    }

    class Parser {
    public:
        expr_detail::Builder builder;

        explicit Parser(std::string_view s) : s_(s) {}

        size_t pos() const { return i_; }
        bool at_end() const { return i_ >= s_.size(); }
        void skip_ws() {
            while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
        }

        int parse_expr() {
            int lhs = parse_term();
            for (;;) {
                skip_ws();
                if (peek('+')) {
                    uint32_t off = take();
                    lhs = bin(Op::Add, lhs, parse_term(), off);
                } else if (peek('-')) {
                    uint32_t off = take();
                    lhs = bin(Op::Sub, lhs, parse_term(), off);
                } else {
                    return lhs;
                }
            }
        }

    private:
        std::string_view s_;
        size_t i_ = 0;

        bool peek(char c) const { return i_ < s_.size() && s_[i_] == c; }
        uint32_t take() { return static_cast<uint32_t>(i_++); }

        int bin(Op op, int a, int b, uint32_t off) {
            Node n;
            n.op = op;
            n.lhs = a;
            n.rhs = b;
            n.offset = off;
            builder.nodes.push_back(n);
            return static_cast<int>(builder.nodes.size()) - 1;
        }

        int parse_term() {
            int lhs = parse_factor();
            for (;;) {
                skip_ws();
                if (peek('*')) {
                    uint32_t off = take();
                    lhs = bin(Op::Mul, lhs, parse_factor(), off);
                } else if (peek('/')) {
                    uint32_t off = take();
                    lhs = bin(Op::Div, lhs, parse_factor(), off);
                } else {
                    return lhs;
                }
            }
        }

        int parse_factor() {
            skip_ws();
            if (peek('-')) {
                uint32_t off = take();
                int inner = parse_factor();
                // canonicalize -<literal> to a negative constant so that
                // printing round-trips structurally
                if (builder.nodes[inner].op == Op::Const)
                    return builder.mk_const(-builder.nodes[inner].value, off);
                Node n;
                n.op = Op::Neg;
                n.lhs = inner;
                n.offset = off;
                builder.nodes.push_back(n);
                return static_cast<int>(builder.nodes.size()) - 1;
            }
            return parse_power();
        }

        int parse_power() {
            int base = parse_atom();
            for (;;) {
                skip_ws();
                if (!peek('^')) return base;
                uint32_t off = take();
                int e = parse_int_exponent();
                Node n;
                n.op = Op::Pow;
                n.lhs = base;
                n.ipow = e;
                n.offset = off;
                builder.nodes.push_back(n);
                base = static_cast<int>(builder.nodes.size()) - 1;
            }
        }

        int parse_int_exponent() {
            skip_ws();
            bool parens = false;
            if (peek('(')) {
                ++i_;
                parens = true;
                skip_ws();
            }
            bool negative = false;
            if (peek('-')) {
                ++i_;
                negative = true;
                skip_ws();
            }
            if (at_end() || !std::isdigit(static_cast<unsigned char>(s_[i_])))
                throw ParseError("exponent must be an integer literal", i_);
            long v = 0;
            size_t start = i_;
            while (i_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[i_]))) {
                v = v * 10 + (s_[i_] - '0');
                if (v > 1000000) throw ParseError("exponent too large", start);
                ++i_;
            }
            if (i_ < s_.size() && (s_[i_] == '.' || s_[i_] == 'e' || s_[i_] == 'E'))
                throw ParseError("exponent must be an integer literal", i_);
            if (parens) {
                skip_ws();
                if (!peek(')')) throw ParseError("expected ')' after exponent", i_);
                ++i_;
            }
            return static_cast<int>(negative ? -v : v);
        }

        int parse_atom() {
            skip_ws();
            if (at_end()) throw ParseError("unexpected end of expression", i_);
            char c = s_[i_];
            if (c == '(') {
                ++i_;
                int e = parse_expr();
                skip_ws();
                if (!peek(')')) throw ParseError("expected ')'", i_);
                ++i_;
                return e;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
            throw ParseError(std::string("unexpected character '") + c + "'", i_);
        }

        int parse_number() {
            uint32_t off = static_cast<uint32_t>(i_);
            double v = 0.0;
            const char* begin = s_.data() + i_;
            const char* end = s_.data() + s_.size();
            auto res = std::from_chars(begin, end, v);
            if (res.ec != std::errc() || res.ptr == begin)
                throw ParseError("malformed number", i_);
            i_ += static_cast<size_t>(res.ptr - begin);
            return builder.mk_const(v, off);
        }

        int parse_ident() {
            uint32_t off = static_cast<uint32_t>(i_);
            size_t start = i_;
            while (i_ < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_'))
                ++i_;
            std::string_view id = s_.substr(start, i_ - start);
            if (id == "z" || id == "a" || id == "x")
                return builder.mk_var(id[0], off);

            Fn1 f1;
            Fn2 f2;
            bool is1 = true, known = true;
            if (id == "exp") f1 = Fn1::Exp;
            else if (id == "log") f1 = Fn1::Log;
            else if (id == "sin") f1 = Fn1::Sin;
            else if (id == "cos") f1 = Fn1::Cos;
            else if (id == "sqrt") f1 = Fn1::Sqrt;
            else if (id == "abs") f1 = Fn1::Abs;
            else if (id == "min") { f2 = Fn2::Min; is1 = false; }
            else if (id == "max") { f2 = Fn2::Max; is1 = false; }
            else known = false;
            if (!known)
                throw ParseError("unknown identifier '" + std::string(id) + "'", start);

            skip_ws();
            if (!peek('('))
                throw ParseError("function '" + std::string(id) + "' requires arguments",
                                 i_);
            ++i_;
            int a = parse_expr();
            skip_ws();
            if (is1) {
                if (peek(','))
                    throw ParseError("function '" + std::string(id) + "' takes one argument",
                                     i_);
                if (!peek(')')) throw ParseError("expected ')'", i_);
                ++i_;
                return builder.mk_call1(f1, a, off);
            }
            if (!peek(','))
                throw ParseError("function '" + std::string(id) + "' takes two arguments",
                                 i_);
            ++i_;
            int b = parse_expr();
            skip_ws();
            if (!peek(')')) throw ParseError("expected ')'", i_);
            ++i_;
            return builder.mk_call2(f2, a, b, off);
        }
    };
};

}  // namespace agediff
