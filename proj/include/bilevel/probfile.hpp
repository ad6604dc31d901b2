#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "instance.hpp"
#include "sha256.hpp"

namespace bdl {

/// Positioned parse failure; positions are 1-based.
struct ParseError {
    int line = 0;
    int column = 0;
    std::string message;
    std::string token;

    std::string pretty() const {
        std::ostringstream os;
        os << "parse error at " << line << ":" << column << ": " << message;
        if (!token.empty()) os << " (near '" << token << "')";
        return os.str();
    }
};

/// parse() result: either an instance or a positioned error.
struct ParseResult {
    std::optional<BilevelInstance> instance;
    std::optional<ParseError> error;
    std::vector<std::string> warnings;

    bool ok() const { return instance.has_value(); }
};

namespace pf_detail {

struct Cursor {
    const std::string& text;
    std::size_t pos = 0;
    int line = 1;
};

struct Token {
    enum class Kind { Ident, Number, Symbol, End } kind = Kind::End;
    std::string text;
    int line = 1, col = 1;
    double number = 0;
};

/// Expression tokenizer for a single line.
class LineLexer {
  public:
    LineLexer(const std::string& s, int line, int col0) : s_(s), line_(line), col0_(col0) {}

    Token next() {
        skip_ws();
        Token t;
        t.line = line_;
        t.col = col0_ + static_cast<int>(i_);
        if (i_ >= s_.size()) {
            t.kind = Token::Kind::End;
            return t;
        }
        char c = s_[i_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t j = i_;
            while (j < s_.size() &&
                   (std::isdigit(static_cast<unsigned char>(s_[j])) || s_[j] == '.' || s_[j] == 'e' ||
                    s_[j] == 'E' || ((s_[j] == '+' || s_[j] == '-') && j > i_ &&
                                     (s_[j - 1] == 'e' || s_[j - 1] == 'E'))))
                ++j;
            t.text = s_.substr(i_, j - i_);
            double v = 0;
            auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
            if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size()) {
                t.kind = Token::Kind::Symbol;  // malformed number surfaces as an error later
                i_ = j;
                return t;
            }
            t.kind = Token::Kind::Number;
            t.number = v;
            i_ = j;
            return t;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            std::size_t j = i_;
            while (j < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[j])))) ++j;
            t.kind = Token::Kind::Ident;
            t.text = s_.substr(i_, j - i_);
            i_ = j;
            return t;
        }
        t.kind = Token::Kind::Symbol;
        t.text = std::string(1, c);
        ++i_;
        return t;
    }

    Token peek() {
        std::size_t save = i_;
        Token t = next();
        i_ = save;
        return t;
    }

  private:
    void skip_ws() {
        while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
    }
    const std::string& s_;
    std::size_t i_ = 0;
    int line_;
    int col0_;
};

/// Recursive-descent expression parser for:
///   expr := term (("+"|"-") term)*; term := factor ("*" factor)*;
///   factor := atom ["^" uint];
///   atom := number | var | "(" expr ")" | "abs(" expr ")" | "max(" expr "," expr ")".
class ExprParser {
  public:
    ExprParser(const std::string& s, int line, int col0) : lex_(s, line, col0) { advance(); }

    ExprPtr parse_full(ParseError& err) {
        ExprPtr e = parse_expr(err);
        if (!e) return nullptr;
        if (cur_.kind != Token::Kind::End) {
            err = {cur_.line, cur_.col, "unexpected trailing token in expression", cur_.text};
            return nullptr;
        }
        return e;
    }

  private:
    void advance() { cur_ = lex_.next(); }

    ExprPtr parse_expr(ParseError& err) {
        ExprPtr lhs = parse_term(err);
        if (!lhs) return nullptr;
        while (cur_.kind == Token::Kind::Symbol && (cur_.text == "+" || cur_.text == "-")) {
            bool add = cur_.text == "+";
            advance();
            ExprPtr rhs = parse_term(err);
            if (!rhs) return nullptr;
            lhs = Expr::binary(add ? Expr::Kind::Add : Expr::Kind::Sub, lhs, rhs);
        }
        return lhs;
    }

    ExprPtr parse_term(ParseError& err) {
        ExprPtr lhs = parse_factor(err);
        if (!lhs) return nullptr;
        while (cur_.kind == Token::Kind::Symbol && cur_.text == "*") {
            advance();
            ExprPtr rhs = parse_factor(err);
            if (!rhs) return nullptr;
            lhs = Expr::binary(Expr::Kind::Mul, lhs, rhs);
        }
        return lhs;
    }

    ExprPtr parse_factor(ParseError& err) {
        ExprPtr base = parse_atom(err);
        if (!base) return nullptr;
        if (cur_.kind == Token::Kind::Symbol && cur_.text == "^") {
            advance();
            if (cur_.kind != Token::Kind::Number || cur_.number < 0 ||
                cur_.number != std::floor(cur_.number)) {
                err = {cur_.line, cur_.col, "expected nonnegative integer exponent", cur_.text};
                return nullptr;
            }
            unsigned exp = static_cast<unsigned>(cur_.number);
            advance();
            return Expr::pow(base, exp);
        }
        return base;
    }

    ExprPtr parse_atom(ParseError& err) {
        if (cur_.kind == Token::Kind::Number) {
            double v = cur_.number;
            advance();
            return Expr::number(v);
        }
        if (cur_.kind == Token::Kind::Ident) {
            const std::string id = cur_.text;
            if (id == "abs" || id == "max") {
                int line = cur_.line, col = cur_.col;
                advance();
                if (!(cur_.kind == Token::Kind::Symbol && cur_.text == "(")) {
                    err = {line, col, "expected '(' after " + id, cur_.text};
                    return nullptr;
                }
                advance();
                ExprPtr a = parse_expr(err);
                if (!a) return nullptr;
                if (id == "abs") {
                    if (!(cur_.kind == Token::Kind::Symbol && cur_.text == ")")) {
                        err = {cur_.line, cur_.col, "expected ')' closing abs", cur_.text};
                        return nullptr;
                    }
                    advance();
                    return Expr::abs(a);
                }
                if (!(cur_.kind == Token::Kind::Symbol && cur_.text == ",")) {
                    err = {cur_.line, cur_.col, "expected ',' inside max", cur_.text};
                    return nullptr;
                }
                advance();
                ExprPtr b = parse_expr(err);
                if (!b) return nullptr;
                if (!(cur_.kind == Token::Kind::Symbol && cur_.text == ")")) {
                    err = {cur_.line, cur_.col, "expected ')' closing max", cur_.text};
                    return nullptr;
                }
                advance();
                return Expr::binary(Expr::Kind::Max, a, b);
            }
            // variable: x<uint> or y<uint>
            if ((id[0] == 'x' || id[0] == 'y') && id.size() > 1) {
                bool digits = true;
                for (std::size_t i = 1; i < id.size(); ++i)
                    digits = digits && std::isdigit(static_cast<unsigned char>(id[i]));
                if (digits) {
                    int idx = std::atoi(id.c_str() + 1);
                    if (idx >= 1) {
                        char kind = id[0];
                        advance();
                        return Expr::var(kind, idx);
                    }
                }
            }
            err = {cur_.line, cur_.col, "expected number, variable, '(', abs( or max(", cur_.text};
            return nullptr;
        }
        if (cur_.kind == Token::Kind::Symbol && cur_.text == "(") {
            advance();
            ExprPtr e = parse_expr(err);
            if (!e) return nullptr;
            if (!(cur_.kind == Token::Kind::Symbol && cur_.text == ")")) {
                err = {cur_.line, cur_.col, "expected ')'", cur_.text};
                return nullptr;
            }
            advance();
            return e;
        }
        err = {cur_.line, cur_.col, "expected expression atom", cur_.text};
        return nullptr;
    }

    LineLexer lex_;
    Token cur_;
};

inline bool parse_signed_numbers(const std::string& s, std::vector<double>& out) {
    std::istringstream is(s);
    double v;
    while (is >> v) out.push_back(v);
    return is.eof();
}

}  // namespace pf_detail

/// Parses the plain-text problem format:
///   problem "<name>"
///   dim x <n> / dim y <m>
///   xdomain <l1> <u1> [...] grid <c1> [...]   (same for ydomain)
///   geometric: true                            (optional)
///   value function: <expr>                     (optional, geometric only)
///   upper objective: <expr> / lower objective: <expr>
///   upper constraint G<i>: <expr> / lower constraint g<j>: <expr>
/// Constraints are stored as "expr <= 0". Grid-backed functions may be
/// written as `@file <path>` referring to a CSV dump.
inline ParseResult parse_problem(const std::string& text,
                                 const std::string& base_dir = std::string()) {
    ParseResult result;
    auto fail = [&](int line, int col, const std::string& msg, const std::string& tok = "") {
        result.error = ParseError{line, col, msg, tok};
        return result;
    };

    std::string name;
    int n = -1, m = -1;
    std::optional<GridSpec> xgrid, ygrid;
    bool geometric = false;
    std::optional<std::pair<int, std::string>> upper_obj, lower_obj, value_fn;
    std::map<int, std::pair<int, std::string>> upper_cons, lower_cons;  // index -> (line, expr text)

    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        std::string line = raw;
        if (auto h = line.find('#'); h != std::string::npos) line = line.substr(0, h);
        // trim
        auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        int col0 = static_cast<int>(b) + 1;

        auto starts = [&](const std::string& prefix) {
            return line.rfind(prefix, 0) == 0;
        };
        auto rest_after = [&](const std::string& prefix) {
            std::string r = line.substr(prefix.size());
            auto rb = r.find_first_not_of(" \t");
            return rb == std::string::npos ? std::string() : r.substr(rb);
        };

        if (starts("problem")) {
            std::string r = rest_after("problem");
            if (r.size() < 2 || r.front() != '"' || r.back() != '"')
                return fail(lineno, col0, "expected problem \"<name>\"", r);
            if (!name.empty()) return fail(lineno, col0, "duplicate problem section");
            name = r.substr(1, r.size() - 2);
        } else if (starts("dim x")) {
            if (n >= 0) return fail(lineno, col0, "duplicate dim x");
            std::vector<double> v;
            if (!pf_detail::parse_signed_numbers(rest_after("dim x"), v) || v.size() != 1 ||
                v[0] < 1 || v[0] != std::floor(v[0]))
                return fail(lineno, col0, "expected dim x <positive integer>");
            n = static_cast<int>(v[0]);
        } else if (starts("dim y")) {
            if (m >= 0) return fail(lineno, col0, "duplicate dim y");
            std::vector<double> v;
            if (!pf_detail::parse_signed_numbers(rest_after("dim y"), v) || v.size() != 1 ||
                v[0] < 1 || v[0] != std::floor(v[0]))
                return fail(lineno, col0, "expected dim y <positive integer>");
            m = static_cast<int>(v[0]);
        } else if (starts("xdomain") || starts("ydomain")) {
            bool isx = starts("xdomain");
            if ((isx && xgrid) || (!isx && ygrid)) return fail(lineno, col0, "duplicate domain");
            std::string r = rest_after(isx ? "xdomain" : "ydomain");
            auto gpos = r.find("grid");
            if (gpos == std::string::npos) return fail(lineno, col0, "expected 'grid' in domain line");
            std::vector<double> bounds, cnts;
            if (!pf_detail::parse_signed_numbers(r.substr(0, gpos), bounds) ||
                !pf_detail::parse_signed_numbers(r.substr(gpos + 4), cnts))
                return fail(lineno, col0, "malformed domain line", r);
            if (bounds.empty() || bounds.size() % 2 != 0 || cnts.size() != bounds.size() / 2)
                return fail(lineno, col0, "domain needs <lo> <hi> per dimension and matching grid counts");
            std::vector<double> lo, hi;
            std::vector<int> counts;
            for (std::size_t i = 0; i < bounds.size(); i += 2) {
                lo.push_back(bounds[i]);
                hi.push_back(bounds[i + 1]);
            }
            for (double c : cnts) {
                if (c < 1 || c != std::floor(c)) return fail(lineno, col0, "grid counts must be positive integers");
                counts.push_back(static_cast<int>(c));
            }
            try {
                GridSpec g(Box(lo, hi), counts);
                (isx ? xgrid : ygrid) = g;
            } catch (const std::exception& ex) {
                return fail(lineno, col0, ex.what());
            }
        } else if (starts("geometric:")) {
            std::string r = rest_after("geometric:");
            if (r == "true") geometric = true;
            else if (r == "false") geometric = false;
            else return fail(lineno, col0, "expected geometric: true|false", r);
        } else if (starts("value function:")) {
            if (value_fn) return fail(lineno, col0, "duplicate value function");
            value_fn = {lineno, rest_after("value function:")};
        } else if (starts("upper objective:")) {
            if (upper_obj) return fail(lineno, col0, "duplicate upper objective");
            upper_obj = {lineno, rest_after("upper objective:")};
        } else if (starts("lower objective:")) {
            if (lower_obj) return fail(lineno, col0, "duplicate lower objective");
            lower_obj = {lineno, rest_after("lower objective:")};
        } else if (starts("upper constraint G") || starts("lower constraint g")) {
            bool upper = starts("upper constraint G");
            std::string prefix = upper ? "upper constraint G" : "lower constraint g";
            std::string r = line.substr(prefix.size());
            auto cpos = r.find(':');
            if (cpos == std::string::npos) return fail(lineno, col0, "expected ':' in constraint line");
            std::string idxs = r.substr(0, cpos);
            int idx = std::atoi(idxs.c_str());
            if (idx < 1 || idxs.empty() ||
                idxs.find_first_not_of("0123456789") != std::string::npos)
                return fail(lineno, col0, "constraint index must be a positive integer", idxs);
            auto& dst = upper ? upper_cons : lower_cons;
            if (dst.count(idx)) return fail(lineno, col0, "duplicate constraint index", idxs);
            std::string body = r.substr(cpos + 1);
            auto bb = body.find_first_not_of(" \t");
            dst[idx] = {lineno, bb == std::string::npos ? std::string() : body.substr(bb)};
        } else {
            return fail(lineno, col0, "unrecognized section", line.substr(0, 24));
        }
    }

    if (name.empty()) return fail(lineno, 1, "missing problem \"<name>\" line");
    if (n < 0) return fail(lineno, 1, "missing dim x");
    if (m < 0) return fail(lineno, 1, "missing dim y");
    if (!xgrid) return fail(lineno, 1, "missing xdomain");
    if (!ygrid) return fail(lineno, 1, "missing ydomain");
    if (xgrid->dim() != n) return fail(lineno, 1, "xdomain dimension disagrees with dim x");
    if (ygrid->dim() != m) return fail(lineno, 1, "ydomain dimension disagrees with dim y");
    if (!upper_obj) return fail(lineno, 1, "missing upper objective:");
    if (!lower_obj) return fail(lineno, 1, "missing lower objective:");
    if (geometric && (!upper_cons.empty() || !lower_cons.empty()))
        return fail(lineno, 1, "geometric instances take no constraints");
    if (value_fn && !geometric)
        return fail(value_fn->first, 1, "value function override requires geometric: true");
    for (auto& [idx, _] : upper_cons)
        if (idx > static_cast<int>(upper_cons.size()))
            return fail(lineno, 1, "upper constraint indices must be 1..k without gaps");
    for (auto& [idx, _] : lower_cons)
        if (idx > static_cast<int>(lower_cons.size()))
            return fail(lineno, 1, "lower constraint indices must be 1..p without gaps");

    GridSpec joint = concat(*xgrid, *ygrid);

    auto build = [&](const std::pair<int, std::string>& src, int fn, int fm, const GridSpec& fgrid,
                     FuncHandle& out) -> bool {
        const auto& [lno, body] = src;
        if (body.rfind("@file", 0) == 0) {
            std::string path = body.substr(5);
            auto pb = path.find_first_not_of(" \t");
            if (pb == std::string::npos) {
                result.error = ParseError{lno, 1, "expected path after @file", body};
                return false;
            }
            path = path.substr(pb);
            std::string full = base_dir.empty() ? path : base_dir + "/" + path;
            std::ifstream f(full);
            if (!f) {
                result.error = ParseError{lno, 1, "cannot open @file reference", path};
                return false;
            }
            std::stringstream ss;
            ss << f.rdbuf();
            try {
                out = make_grid_handle(grid_from_csv(ss.str()));
            } catch (const std::exception& ex) {
                result.error = ParseError{lno, 1, ex.what(), path};
                return false;
            }
            return true;
        }
        pf_detail::ExprParser ep(body, lno, 1);
        ParseError err;
        ExprPtr e = ep.parse_full(err);
        if (!e) {
            result.error = err;
            return false;
        }
        int mx = 0, my = 0;
        expr_var_span(*e, mx, my);
        if (mx > fn || my > fm) {
            result.error = ParseError{lno, 1, "variable index exceeds declared dimension"};
            return false;
        }
        out = handle_from_expr(e, fn, fm, fgrid);
        if (out.sampled_warning)
            result.warnings.push_back("line " + std::to_string(lno) +
                                      ": expression left the analytic family; grid-sampled");
        return true;
    };

    BilevelInstance inst;
    inst.name = name;
    inst.n = n;
    inst.m = m;
    inst.xgrid = *xgrid;
    inst.ygrid = *ygrid;
    inst.geometric = geometric;
    if (!build(*upper_obj, n, m, joint, inst.F)) return result;
    FuncHandle f;
    if (!build(*lower_obj, n, m, joint, f)) return result;
    inst.lower.f = f;
    inst.lower.nx = n;
    inst.lower.ny = m;
    inst.lower.ygrid = *ygrid;
    for (auto& [idx, src] : upper_cons) {
        FuncHandle gi;
        if (!build(src, n, m, joint, gi)) return result;
        inst.G.push_back(gi);
    }
    for (auto& [idx, src] : lower_cons) {
        FuncHandle gj;
        if (!build(src, n, m, joint, gj)) return result;
        inst.lower.g.push_back(gj);
    }
    if (value_fn) {
        FuncHandle ph;
        if (!build(*value_fn, n, 0, inst.xgrid, ph)) return result;
        if (ph.source && expr_uses_kind(*ph.source, 'y')) {
            result.error = ParseError{value_fn->first, 1, "value function may use x variables only"};
            return result;
        }
        inst.phi_override = ph;
    }
    try {
        inst.validate_shape();
    } catch (const std::exception& ex) {
        return fail(lineno, 1, ex.what());
    }
    result.instance = std::move(inst);
    return result;
}

/// Canonical serialization: fixed section order, shortest round-trip decimals.
/// Grid-backed functions are written as @file references; the caller provides
/// the sink that stores CSV payloads and returns the reference path.
inline std::string serialize_problem(
    const BilevelInstance& inst,
    const std::function<std::string(const std::string& role, const GridFunction&)>& csv_sink =
        nullptr) {
    std::ostringstream os;
    auto emit_fn = [&](const std::string& role, const FuncHandle& f) -> std::string {
        if (f.source) return expr_to_string(*f.source);
        if (f.is_grid() && csv_sink) return "@file " + csv_sink(role, *f.grid);
        if (f.is_grid()) throw std::runtime_error("serialize_problem: grid function needs a csv sink");
        throw std::runtime_error("serialize_problem: function has no serializable source");
    };
    os << "problem \"" << inst.name << "\"\n";
    os << "dim x " << inst.n << "\n";
    os << "dim y " << inst.m << "\n";
    os << "xdomain";
    for (int d = 0; d < inst.n; ++d)
        os << " " << fmt_double(inst.xgrid.box.lo[d]) << " " << fmt_double(inst.xgrid.box.hi[d]);
    os << " grid";
    for (int d = 0; d < inst.n; ++d) os << " " << inst.xgrid.counts[d];
    os << "\n";
    os << "ydomain";
    for (int d = 0; d < inst.m; ++d)
        os << " " << fmt_double(inst.ygrid.box.lo[d]) << " " << fmt_double(inst.ygrid.box.hi[d]);
    os << " grid";
    for (int d = 0; d < inst.m; ++d) os << " " << inst.ygrid.counts[d];
    os << "\n";
    if (inst.geometric) os << "geometric: true\n";
    if (inst.phi_override) os << "value function: " << emit_fn("phi", *inst.phi_override) << "\n";
    os << "upper objective: " << emit_fn("F", inst.F) << "\n";
    os << "lower objective: " << emit_fn("f", inst.lower.f) << "\n";
    for (std::size_t i = 0; i < inst.G.size(); ++i)
        os << "upper constraint G" << (i + 1) << ": " << emit_fn("G" + std::to_string(i + 1), inst.G[i])
           << "\n";
    for (std::size_t j = 0; j < inst.lower.g.size(); ++j)
        os << "lower constraint g" << (j + 1) << ": "
           << emit_fn("g" + std::to_string(j + 1), inst.lower.g[j]) << "\n";
    return os.str();
}

/// SHA-256 of the canonical serialization; binds reports to exact inputs.
inline std::string instance_hash(const BilevelInstance& inst) {
    return Sha256::hash_hex(serialize_problem(inst, [](const std::string&, const GridFunction& g) {
        // hash embeds the grid payload itself rather than a file path
        return "sha256:" + Sha256::hash_hex(grid_to_csv(g));
    }));
}

/// Structural instance equality (grids, flags, and function sources).
inline bool structurally_equal(const BilevelInstance& a, const BilevelInstance& b) {
    if (a.name != b.name || a.n != b.n || a.m != b.m) return false;
    if (!(a.xgrid == b.xgrid) || !(a.ygrid == b.ygrid)) return false;
    if (a.geometric != b.geometric) return false;
    if (a.G.size() != b.G.size() || a.lower.g.size() != b.lower.g.size()) return false;
    auto fn_eq = [](const FuncHandle& f, const FuncHandle& g) {
        if ((f.source == nullptr) != (g.source == nullptr)) return false;
        if (f.source) return expr_equal(*f.source, *g.source);
        if (f.is_grid() && g.is_grid()) {
            if (!(f.grid->grid == g.grid->grid)) return false;
            for (std::size_t i = 0; i < f.grid->values.size(); ++i)
                if (!(f.grid->values[i] == g.grid->values[i])) return false;
            return true;
        }
        return false;
    };
    if (!fn_eq(a.F, b.F) || !fn_eq(a.lower.f, b.lower.f)) return false;
    for (std::size_t i = 0; i < a.G.size(); ++i)
        if (!fn_eq(a.G[i], b.G[i])) return false;
    for (std::size_t j = 0; j < a.lower.g.size(); ++j)
        if (!fn_eq(a.lower.g[j], b.lower.g[j])) return false;
    if (a.phi_override.has_value() != b.phi_override.has_value()) return false;
    if (a.phi_override && !fn_eq(*a.phi_override, *b.phi_override)) return false;
    return true;
}

}  // namespace bdl
