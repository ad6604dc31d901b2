#pragma once

#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bdl {

/// Shortest round-trip decimal rendering of a finite double.
inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Extended-real scalar: a finite double or one of the two infinities.
/// NaN is rejected at construction, so the order is total.
class XReal {
  public:
    XReal() : v_(0.0) {}
    XReal(double v) : v_(v) {
        if (std::isnan(v)) throw std::invalid_argument("XReal: NaN payload");
    }

    static XReal pos_inf() { return XReal(std::numeric_limits<double>::infinity(), 0); }
    static XReal neg_inf() { return XReal(-std::numeric_limits<double>::infinity(), 0); }

    bool is_pos_inf() const { return std::isinf(v_) && v_ > 0; }
    bool is_neg_inf() const { return std::isinf(v_) && v_ < 0; }
    bool is_finite() const { return std::isfinite(v_); }

    /// Finite payload; throws on an infinity.
    double finite_value() const {
        if (!is_finite()) throw std::logic_error("XReal: finite_value() on infinity");
        return v_;
    }

    /// Underlying IEEE double (finite or +-inf). Safe for ordering.
    double raw() const { return v_; }

    friend bool operator==(const XReal& a, const XReal& b) { return a.v_ == b.v_; }
    friend bool operator!=(const XReal& a, const XReal& b) { return a.v_ != b.v_; }
    friend bool operator<(const XReal& a, const XReal& b) { return a.v_ < b.v_; }
    friend bool operator<=(const XReal& a, const XReal& b) { return a.v_ <= b.v_; }
    friend bool operator>(const XReal& a, const XReal& b) { return a.v_ > b.v_; }
    friend bool operator>=(const XReal& a, const XReal& b) { return a.v_ >= b.v_; }

    std::string to_string() const {
        if (is_pos_inf()) return "+inf";
        if (is_neg_inf()) return "-inf";
        return fmt_double(v_);
    }

    /// Parses "+inf", "-inf" or a decimal literal.
    static XReal parse(std::string_view s) {
        if (s == "+inf" || s == "inf") return pos_inf();
        if (s == "-inf") return neg_inf();
        double v = 0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw std::invalid_argument("XReal: cannot parse '" + std::string(s) + "'");
        return XReal(v);
    }

    friend std::ostream& operator<<(std::ostream& os, const XReal& x) { return os << x.to_string(); }

  private:
    XReal(double v, int) : v_(v) {}  // unchecked
    double v_;
};

/// a + b. Mixed infinities resolve to +inf; same-sign infinities keep their sign.
inline XReal xadd(const XReal& a, const XReal& b) {
    if (a.is_finite() && b.is_finite()) return XReal(a.raw() + b.raw());
    if ((a.is_pos_inf() && b.is_neg_inf()) || (a.is_neg_inf() && b.is_pos_inf()))
        return XReal::pos_inf();
    // one or both infinite with consistent sign
    if (a.is_pos_inf() || b.is_pos_inf()) return XReal::pos_inf();
    return XReal::neg_inf();
}

/// a - b. inf - inf of equal sign is +inf; otherwise a + (-b).
inline XReal xsub(const XReal& a, const XReal& b) {
    if ((a.is_pos_inf() && b.is_pos_inf()) || (a.is_neg_inf() && b.is_neg_inf()))
        return XReal::pos_inf();
    if (b.is_pos_inf()) return xadd(a, XReal::neg_inf());
    if (b.is_neg_inf()) return xadd(a, XReal::pos_inf());
    return xadd(a, XReal(-b.raw()));
}

/// lambda * a for lambda >= 0, with 0*(+inf) = +inf and 0*(-inf) = 0.
inline XReal xscale(double lambda, const XReal& a) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("xscale: negative multiplier");
    if (lambda == 0.0) {
        if (a.is_pos_inf()) return XReal::pos_inf();
        return XReal(0.0);
    }
    if (a.is_pos_inf()) return XReal::pos_inf();
    if (a.is_neg_inf()) return XReal::neg_inf();
    return XReal(lambda * a.raw());
}

/// Sign flip; maps +inf to -inf and back. Internal to signed scaling below.
inline XReal xneg(const XReal& a) {
    if (a.is_pos_inf()) return XReal::neg_inf();
    if (a.is_neg_inf()) return XReal::pos_inf();
    return XReal(-a.raw());
}

/// c * a for any real c: c < 0 is handled as (-c) * (-a).
inline XReal xscale_signed(double c, const XReal& a) {
    if (c >= 0.0) return xscale(c, a);
    return xscale(-c, xneg(a));
}

inline XReal xmin(const XReal& a, const XReal& b) { return a <= b ? a : b; }
inline XReal xmax(const XReal& a, const XReal& b) { return a >= b ? a : b; }

}  // namespace bdl
