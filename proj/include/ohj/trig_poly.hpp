#ifndef OHJ_TRIG_POLY_HPP_
#define OHJ_TRIG_POLY_HPP_

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ohj/error.hpp"
#include "ohj/grid.hpp"

namespace ohj {

//! One mode a*cos(2*pi*k.x) + b*sin(2*pi*k.x).
struct TrigTerm {
  int kx = 0;
  int ky = 0;
  double cos_coef = 0.0;
  double sin_coef = 0.0;
};

//! Real trigonometric polynomial on the torus, evaluated analytically
//! together with its gradient and Hessian.
class TrigPoly {
 public:
  TrigPoly() = default;
  explicit TrigPoly(double constant, std::vector<TrigTerm> terms = {})
      : constant_(constant), terms_(std::move(terms)) {}

  static TrigPoly constant(double c) { return TrigPoly(c); }
  static TrigPoly cosine(double coef, int kx, int ky = 0) { return TrigPoly(0.0, {{kx, ky, coef, 0.0}}); }
  static TrigPoly sine(double coef, int kx, int ky = 0) { return TrigPoly(0.0, {{kx, ky, 0.0, coef}}); }

  double constant_term() const { return constant_; }
  const std::vector<TrigTerm>& terms() const { return terms_; }

  bool is_constant() const {
    for (const auto& t : terms_) {
      if ((t.kx != 0 || t.ky != 0) && (t.cos_coef != 0.0 || t.sin_coef != 0.0)) return false;
    }
    return true;
  }
  bool is_zero() const { return is_constant() && value({0.0, 0.0}) == 0.0; }
  bool depends_on_y() const {
    for (const auto& t : terms_) {
      if (t.ky != 0 && (t.cos_coef != 0.0 || t.sin_coef != 0.0)) return true;
    }
    return false;
  }

  double value(const Vec2& x) const {
    double v = constant_;
    for (const auto& t : terms_) {
      const double arg = phase(t, x);
      v += t.cos_coef * std::cos(arg) + t.sin_coef * std::sin(arg);
    }
    return v;
  }

  Vec2 gradient(const Vec2& x) const {
    Vec2 g{0.0, 0.0};
    for (const auto& t : terms_) {
      const double arg = phase(t, x);
      const double s = -t.cos_coef * std::sin(arg) + t.sin_coef * std::cos(arg);
      g[0] += kTwoPi * t.kx * s;
      g[1] += kTwoPi * t.ky * s;
    }
    return g;
  }

  //! (f_xx, f_xy, f_yy)
  std::array<double, 3> hessian(const Vec2& x) const {
    std::array<double, 3> hs{0.0, 0.0, 0.0};
    for (const auto& t : terms_) {
      const double arg = phase(t, x);
      const double c = -(t.cos_coef * std::cos(arg) + t.sin_coef * std::sin(arg)) * kTwoPi * kTwoPi;
      hs[0] += c * t.kx * t.kx;
      hs[1] += c * t.kx * t.ky;
      hs[2] += c * t.ky * t.ky;
    }
    return hs;
  }

  double laplacian(const Vec2& x) const {
    auto hs = hessian(x);
    return hs[0] + hs[2];
  }

  TrigPoly operator+(const TrigPoly& o) const {
    TrigPoly r = *this;
    r.constant_ += o.constant_;
    r.terms_.insert(r.terms_.end(), o.terms_.begin(), o.terms_.end());
    return r;
  }
  TrigPoly operator+(double c) const { return *this + TrigPoly(c); }
  TrigPoly operator-(double c) const { return *this + TrigPoly(-c); }
  TrigPoly operator*(double s) const {
    TrigPoly r = *this;
    r.constant_ *= s;
    for (auto& t : r.terms_) {
      t.cos_coef *= s;
      t.sin_coef *= s;
    }
    return r;
  }

  //! Round-trippable text form, e.g. "-0.3; cos 1 0 0.2; sin 2 0 0.1".
  std::string to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << constant_;
    for (const auto& t : terms_) {
      if (t.cos_coef != 0.0) os << "; cos " << t.kx << ' ' << t.ky << ' ' << t.cos_coef;
      if (t.sin_coef != 0.0) os << "; sin " << t.kx << ' ' << t.ky << ' ' << t.sin_coef;
    }
    return os.str();
  }

  //! Parses the form written by to_string(). Each ';'-separated item is a
  //! bare constant or "cos|sin kx ky coef".
  static TrigPoly parse(const std::string& text) {
    TrigPoly p;
    std::stringstream items(text);
    std::string item;
    while (std::getline(items, item, ';')) {
      std::istringstream is(item);
      std::string head;
      if (!(is >> head)) continue;
      if (head == "cos" || head == "sin") {
        TrigTerm t;
        double coef = 0.0;
        if (!(is >> t.kx >> t.ky >> coef)) {
          throw ConfigError("malformed trigonometric term '" + item + "' (expected '" + head +
                            " kx ky coef')");
        }
        (head == "cos" ? t.cos_coef : t.sin_coef) = coef;
        p.terms_.push_back(t);
      } else {
        try {
          std::size_t used = 0;
          p.constant_ += std::stod(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          throw ConfigError("malformed trigonometric term '" + item + "'");
        }
      }
      std::string rest;
      if (is >> rest) throw ConfigError("trailing text in trigonometric term '" + item + "'");
    }
    return p;
  }

 private:
  static constexpr double kTwoPi = 2.0 * std::numbers::pi;

  static double phase(const TrigTerm& t, const Vec2& x) { return kTwoPi * (t.kx * x[0] + t.ky * x[1]); }

  double constant_ = 0.0;
  std::vector<TrigTerm> terms_;
};

}  // namespace ohj

#endif  // OHJ_TRIG_POLY_HPP_
