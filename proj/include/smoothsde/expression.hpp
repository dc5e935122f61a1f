#pragma once

#include <memory>
#include <string>
#include <vector>

namespace smoothsde {

/// Arithmetic expression in one variable `x`.
///
/// Grammar: + - * / ^, unary minus, parentheses, numbers, the constant `pi`
/// and the functions sin cos exp log sqrt abs tanh.
class Expression {
public:
    explicit Expression(const std::string& text);
    double operator()(double x) const;
    const std::string& text() const { return text_; }

    struct Node;

private:
    std::string text_;
    std::shared_ptr<const Node> root_;
};

/// A true parameter curve: an expression or a piecewise-linear table
/// (held constant beyond its end points).
class Curve {
public:
    static Curve expression(const std::string& text);
    static Curve table(std::vector<double> xs, std::vector<double> ys);

    double operator()(double x) const;
    std::string describe() const;

private:
    std::shared_ptr<const Expression> expr_;
    std::vector<double> xs_, ys_;
};

}  // namespace smoothsde
