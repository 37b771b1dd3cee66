#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "cpinn/autodiff/network.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

/// Compiled arithmetic expression in x1..xd.
///
///   expr   := term (('+' | '-') term)*
///   term   := unary (('*' | '/') unary)*
///   unary  := ('+' | '-') unary | power
///   power  := atom ('^' unary)?
///   atom   := number | 'pi' | 'e' | 'x' digits | func '(' expr ')' | '(' expr ')'
///   func   := sin | cos | exp | abs | sign | sqrt
///
/// '^' is right-associative and binds tighter than unary minus, so -x^2 is
/// -(x^2). sign(0) = 1.
class Expression {
public:
    Expression() = default;

    static Expression parse(const std::string& text, int dim, int line = 0) {
        Parser p{text, 0, dim, line};
        Expression e;
        e.root_ = p.expr();
        p.skip_ws();
        if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
        e.text_ = text;
        return e;
    }

    static Expression constant(double v) {
        Expression e;
        e.root_ = std::make_shared<Node>(Node{Op::kConst, v, 0, {}});
        e.text_ = std::to_string(v);
        return e;
    }

    double operator()(const Vec& x) const {
        if (!root_) throw ConfigError("evaluating an empty expression");
        return eval(*root_, x);
    }

    const std::string& text() const { return text_; }
    bool empty() const { return !root_; }

private:
    enum class Op { kConst, kVar, kAdd, kSub, kMul, kDiv, kPow, kNeg, kSin, kCos, kExp, kAbs, kSign, kSqrt };

    struct Node {
        Op op;
        double value;
        int var;
        std::vector<std::shared_ptr<Node>> args;
    };
    using NodePtr = std::shared_ptr<Node>;

    static double eval(const Node& n, const Vec& x) {
        auto a = [&](int i) { return eval(*n.args[static_cast<std::size_t>(i)], x); };
        switch (n.op) {
            case Op::kConst: return n.value;
            case Op::kVar: return x[n.var];
            case Op::kAdd: return a(0) + a(1);
            case Op::kSub: return a(0) - a(1);
            case Op::kMul: return a(0) * a(1);
            case Op::kDiv: return a(0) / a(1);
            case Op::kPow: return std::pow(a(0), a(1));
            case Op::kNeg: return -a(0);
            case Op::kSin: return std::sin(a(0));
            case Op::kCos: return std::cos(a(0));
            case Op::kExp: return std::exp(a(0));
            case Op::kAbs: return std::abs(a(0));
            case Op::kSign: return a(0) < 0.0 ? -1.0 : 1.0;
            case Op::kSqrt: return std::sqrt(a(0));
        }
        return 0.0;
    }

    struct Parser {
        const std::string& s;
        std::size_t pos;
        int dim;
        int line;

        [[noreturn]] void fail(const std::string& msg) const {
            throw ConfigError("expression '" + s + "' at column " + std::to_string(pos + 1) + ": " + msg, line);
        }

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }

        bool accept(char c) {
            skip_ws();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        static NodePtr make(Op op, std::vector<NodePtr> args) {
            return std::make_shared<Node>(Node{op, 0.0, 0, std::move(args)});
        }

        NodePtr expr() {
            NodePtr lhs = term();
            for (;;) {
                if (accept('+')) lhs = make(Op::kAdd, {lhs, term()});
                else if (accept('-')) lhs = make(Op::kSub, {lhs, term()});
                else return lhs;
            }
        }

        NodePtr term() {
            NodePtr lhs = unary();
            for (;;) {
                if (accept('*')) lhs = make(Op::kMul, {lhs, unary()});
                else if (accept('/')) lhs = make(Op::kDiv, {lhs, unary()});
                else return lhs;
            }
        }

        NodePtr unary() {
            if (accept('-')) return make(Op::kNeg, {unary()});
            if (accept('+')) return unary();
            return power();
        }

        NodePtr power() {
            NodePtr base = atom();
            if (accept('^')) return make(Op::kPow, {base, unary()});
            return base;
        }

        NodePtr atom() {
            skip_ws();
            if (pos >= s.size()) fail("unexpected end of input");
            if (accept('(')) {
                NodePtr inner = expr();
                if (!accept(')')) fail("expected ')'");
                return inner;
            }
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
            if (std::isalpha(static_cast<unsigned char>(c))) {
                const std::size_t start = pos;
                while (pos < s.size() && std::isalnum(static_cast<unsigned char>(s[pos]))) ++pos;
                const std::string word = s.substr(start, pos - start);
                if (word == "pi") return std::make_shared<Node>(Node{Op::kConst, std::numbers::pi, 0, {}});
                if (word == "e") return std::make_shared<Node>(Node{Op::kConst, std::numbers::e, 0, {}});
                if (word.size() > 1 && word[0] == 'x' && word.find_first_not_of("0123456789", 1) == std::string::npos) {
                    const int k = std::stoi(word.substr(1));
                    if (k < 1 || k > dim) {
                        pos = start;
                        fail("variable " + word + " outside x1..x" + std::to_string(dim));
                    }
                    return std::make_shared<Node>(Node{Op::kVar, 0.0, k - 1, {}});
                }
                Op op;
                if (word == "sin") op = Op::kSin;
                else if (word == "cos") op = Op::kCos;
                else if (word == "exp") op = Op::kExp;
                else if (word == "abs") op = Op::kAbs;
                else if (word == "sign") op = Op::kSign;
                else if (word == "sqrt") op = Op::kSqrt;
                else {
                    pos = start;
                    fail("unknown identifier '" + word + "'");
                }
                if (!accept('(')) fail("expected '(' after " + word);
                NodePtr arg = expr();
                if (!accept(')')) fail("expected ')'");
                return make(op, {arg});
            }
            fail("unexpected '" + std::string(1, c) + "'");
        }

        NodePtr number() {
            const char* begin = s.c_str() + pos;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("malformed number");
            pos += static_cast<std::size_t>(end - begin);
            return std::make_shared<Node>(Node{Op::kConst, v, 0, {}});
        }
    };

    NodePtr root_;
    std::string text_;
};

}  // namespace cpinn
