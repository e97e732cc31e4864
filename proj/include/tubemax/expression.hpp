#pragma once

// Arithmetic expressions over named variables for user-defined models.
// Grammar: sum := prod (('+'|'-') prod)*; prod := unary (('*'|'/') unary)*;
// unary := ('-'|'+') unary | power; power := atom ('^' unary)?;
// atom := number | name | name '(' args ')' | '(' sum ')'.

#include "tubemax/error.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace tubemax {

class Expression {
public:
    /// `variables` are bound by position at evaluation; `constants` are fixed.
    Expression(const std::string& text, const std::vector<std::string>& variables,
               const std::map<std::string, double>& constants = {})
        : text_(text) {
        Parser p{text, 0, variables, constants};
        root_ = p.sum();
        p.skip();
        if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
    }

    double operator()(const std::vector<double>& x) const { return root_->eval(x.data()); }
    double operator()(const double* x) const { return root_->eval(x); }
    const std::string& text() const { return text_; }

private:
    struct Node {
        virtual ~Node() = default;
        virtual double eval(const double* x) const = 0;
    };
    using Ptr = std::shared_ptr<const Node>;

    struct Const final : Node {
        double v;
        explicit Const(double value) : v(value) {}
        double eval(const double*) const override { return v; }
    };
    struct Var final : Node {
        std::size_t i;
        explicit Var(std::size_t index) : i(index) {}
        double eval(const double* x) const override { return x[i]; }
    };
    struct Unary final : Node {
        double (*f)(double);
        Ptr a;
        Unary(double (*fn)(double), Ptr arg) : f(fn), a(std::move(arg)) {}
        double eval(const double* x) const override { return f(a->eval(x)); }
    };
    struct Binary final : Node {
        char op;
        Ptr a, b;
        Binary(char o, Ptr l, Ptr r) : op(o), a(std::move(l)), b(std::move(r)) {}
        double eval(const double* x) const override {
            const double l = a->eval(x), r = b->eval(x);
            switch (op) {
                case '+': return l + r;
                case '-': return l - r;
                case '*': return l * r;
                case '/': return l / r;
                case '^': return std::pow(l, r);
                case 'a': return std::atan2(l, r);
                default: return std::pow(l, r);
            }
        }
    };

    struct Parser {
        const std::string& s;
        std::size_t pos;
        const std::vector<std::string>& vars;
        const std::map<std::string, double>& consts;

        [[noreturn]] void fail(const std::string& msg) const {
            throw ConfigError("expression '" + s + "' at " + std::to_string(pos) + ": " + msg);
        }
        void skip() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        }
        bool eat(char c) {
            skip();
            if (pos < s.size() && s[pos] == c) {
                ++pos;
                return true;
            }
            return false;
        }

        Ptr sum() {
            Ptr l = prod();
            while (true) {
                if (eat('+')) {
                    l = std::make_shared<Binary>('+', l, prod());
                } else if (eat('-')) {
                    l = std::make_shared<Binary>('-', l, prod());
                } else {
                    return l;
                }
            }
        }
        Ptr prod() {
            Ptr l = unary();
            while (true) {
                if (eat('*')) {
                    l = std::make_shared<Binary>('*', l, unary());
                } else if (eat('/')) {
                    l = std::make_shared<Binary>('/', l, unary());
                } else {
                    return l;
                }
            }
        }
        Ptr unary() {
            if (eat('-')) return std::make_shared<Binary>('-', std::make_shared<Const>(0.0), unary());
            if (eat('+')) return unary();
            return power();
        }
        Ptr power() {
            Ptr base = atom();
            if (eat('^')) return std::make_shared<Binary>('^', base, unary());
            return base;
        }
        Ptr atom() {
            skip();
            if (pos >= s.size()) fail("unexpected end");
            if (eat('(')) {
                Ptr e = sum();
                if (!eat(')')) fail("expected ')'");
                return e;
            }
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(s.substr(pos), &used);
                } catch (const std::exception&) {
                    fail("bad number");
                }
                pos += used;
                return std::make_shared<Const>(v);
            }
            if (!(std::isalpha(static_cast<unsigned char>(c)) || c == '_')) fail("unexpected '" + std::string(1, c) + "'");
            const std::size_t start = pos;
            while (pos < s.size() && (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) ++pos;
            const std::string name = s.substr(start, pos - start);
            if (eat('(')) return call(name);
            for (std::size_t i = 0; i < vars.size(); ++i)
                if (vars[i] == name) return std::make_shared<Var>(i);
            if (const auto it = consts.find(name); it != consts.end()) return std::make_shared<Const>(it->second);
            if (name == "pi") return std::make_shared<Const>(std::numbers::pi);
            if (name == "e") return std::make_shared<Const>(std::numbers::e);
            fail("unknown name '" + name + "'");
        }
        Ptr call(const std::string& name) {
            std::vector<Ptr> args;
            if (!eat(')')) {
                do {
                    args.push_back(sum());
                } while (eat(','));
                if (!eat(')')) fail("expected ')'");
            }
            static const std::map<std::string, double (*)(double)> unary_fns{
                {"sin", [](double v) { return std::sin(v); }},   {"cos", [](double v) { return std::cos(v); }},
                {"tan", [](double v) { return std::tan(v); }},   {"exp", [](double v) { return std::exp(v); }},
                {"log", [](double v) { return std::log(v); }},   {"sqrt", [](double v) { return std::sqrt(v); }},
                {"abs", [](double v) { return std::abs(v); }},   {"asin", [](double v) { return std::asin(v); }},
                {"acos", [](double v) { return std::acos(v); }}, {"atan", [](double v) { return std::atan(v); }},
                {"sinh", [](double v) { return std::sinh(v); }}, {"cosh", [](double v) { return std::cosh(v); }},
                {"tanh", [](double v) { return std::tanh(v); }}};
            if (const auto it = unary_fns.find(name); it != unary_fns.end()) {
                if (args.size() != 1) fail(name + " takes one argument");
                return std::make_shared<Unary>(it->second, args[0]);
            }
            if (name == "pow" || name == "atan2") {
                if (args.size() != 2) fail(name + " takes two arguments");
                return std::make_shared<Binary>(name == "pow" ? '^' : 'a', args[0], args[1]);
            }
            fail("unknown function '" + name + "'");
        }
    };

    std::string text_;
    Ptr root_;
};

}  // namespace tubemax
