#include "smoothsde/expression.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "smoothsde/errors.hpp"

namespace smoothsde {

struct Expression::Node {
    enum Kind { Number, Var, Neg, Add, Sub, Mul, Div, Pow, Func } kind = Number;
    double value = 0.0;
    double (*func)(double) = nullptr;
    std::shared_ptr<const Node> a, b;

    double eval(double x) const {
        switch (kind) {
            case Number: return value;
            case Var: return x;
            case Neg: return -a->eval(x);
            case Add: return a->eval(x) + b->eval(x);
            case Sub: return a->eval(x) - b->eval(x);
            case Mul: return a->eval(x) * b->eval(x);
            case Div: return a->eval(x) / b->eval(x);
            case Pow: return std::pow(a->eval(x), b->eval(x));
            case Func: return func(a->eval(x));
        }
        return 0.0;
    }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

NodePtr make(Node::Kind kind, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->kind = kind;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        auto n = sum();
        skip();
        if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("expression \"" + s_ + "\" at position " + std::to_string(pos_) + ": " + msg);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    NodePtr sum() {
        auto n = product();
        for (;;) {
            if (accept('+')) n = make(Node::Add, n, product());
            else if (accept('-')) n = make(Node::Sub, n, product());
            else return n;
        }
    }

    NodePtr product() {
        auto n = unary();
        for (;;) {
            if (accept('*')) n = make(Node::Mul, n, unary());
            else if (accept('/')) n = make(Node::Div, n, unary());
            else return n;
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(Node::Neg, unary());
        if (accept('+')) return unary();
        return power();
    }

    // Right-associative; binds tighter than unary minus on its left.
    NodePtr power() {
        auto base = primary();
        if (accept('^')) return make(Node::Pow, base, unary());
        return base;
    }

    NodePtr primary() {
        skip();
        if (pos_ >= s_.size()) fail("unexpected end");
        if (accept('(')) {
            auto n = sum();
            if (!accept(')')) fail("expected ')'");
            return n;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            const char* begin = s_.c_str() + pos_;
            char* end = nullptr;
            const double v = std::strtod(begin, &end);
            if (end == begin) fail("bad number");
            pos_ += static_cast<std::size_t>(end - begin);
            auto n = std::make_shared<Node>();
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
            const std::string name = s_.substr(start, pos_ - start);
            if (name == "x") return make(Node::Var);
            if (name == "pi") {
                auto n = std::make_shared<Node>();
                n->value = std::numbers::pi;
                return n;
            }
            double (*f)(double) = nullptr;
            if (name == "sin") f = [](double v) { return std::sin(v); };
            else if (name == "cos") f = [](double v) { return std::cos(v); };
            else if (name == "exp") f = [](double v) { return std::exp(v); };
            else if (name == "log") f = [](double v) { return std::log(v); };
            else if (name == "sqrt") f = [](double v) { return std::sqrt(v); };
            else if (name == "abs") f = [](double v) { return std::abs(v); };
            else if (name == "tanh") f = [](double v) { return std::tanh(v); };
            else {
                pos_ = start;
                fail("unknown name '" + name + "'");
            }
            if (!accept('(')) fail("expected '(' after " + name);
            auto arg = sum();
            if (!accept(')')) fail("expected ')'");
            auto n = std::make_shared<Node>();
            n->kind = Node::Func;
            n->func = f;
            n->a = arg;
            return n;
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace

Expression::Expression(const std::string& text) : text_(text), root_(Parser(text_).parse()) {}

double Expression::operator()(double x) const { return root_->eval(x); }

Curve Curve::expression(const std::string& text) {
    Curve c;
    c.expr_ = std::make_shared<const Expression>(text);
    return c;
}

Curve Curve::table(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() != ys.size() || xs.empty()) throw ConfigError("curve table needs equal, non-empty x and y lists");
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) throw ConfigError("curve table x values must be increasing");
    Curve c;
    c.xs_ = std::move(xs);
    c.ys_ = std::move(ys);
    return c;
}

double Curve::operator()(double x) const {
    if (expr_) return (*expr_)(x);
    if (xs_.empty()) throw ConfigError("curve is empty");
    if (x <= xs_.front()) return ys_.front();
    if (x >= xs_.back()) return ys_.back();
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    const double w = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
    return (1.0 - w) * ys_[i - 1] + w * ys_[i];
}

std::string Curve::describe() const {
    if (expr_) return expr_->text();
    return "table(" + std::to_string(xs_.size()) + " points)";
}

}  // namespace smoothsde
