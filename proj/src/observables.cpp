#include "klmpc/observables.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <sstream>

#include "klmpc/error.hpp"

namespace klmpc {

std::string Observable::name() const {
  const std::string a = "x" + std::to_string(i + 1);
  const std::string b = "x" + std::to_string(j + 1);
  switch (kind) {
    case Kind::kState:
      return a;
    case Kind::kSquare:
      return a + "^2";
    case Kind::kCross:
      return a + "*" + b;
    case Kind::kArrhenius:
      return a + "*exp(-1/" + b + ")";
    case Kind::kLyapunov:
      return "V";
  }
  return "?";
}

Observable Observable::parse(const std::string& name) {
  static const std::regex state_re(R"(x(\d+))");
  static const std::regex square_re(R"(x(\d+)\^2)");
  static const std::regex cross_re(R"(x(\d+)\*x(\d+))");
  static const std::regex arr_re(R"(x(\d+)\*exp\(-1/x(\d+)\))");
  std::smatch m;
  auto idx = [](const std::ssub_match& s) { return std::stoi(s.str()) - 1; };
  if (name == "V") return {Kind::kLyapunov, 0, 0};
  if (std::regex_match(name, m, state_re)) return {Kind::kState, idx(m[1]), 0};
  if (std::regex_match(name, m, square_re)) {
    return {Kind::kSquare, idx(m[1]), 0};
  }
  if (std::regex_match(name, m, cross_re)) {
    return {Kind::kCross, idx(m[1]), idx(m[2])};
  }
  if (std::regex_match(name, m, arr_re)) {
    return {Kind::kArrhenius, idx(m[1]), idx(m[2])};
  }
  throw ValidationError("unknown observable name '" + name + "'");
}

ObservableLibrary::ObservableLibrary(int n_x, std::vector<Observable> entries,
                                     VectorXd x_bar_s, MatrixXd Q_v)
    : n_x_(n_x),
      entries_(std::move(entries)),
      x_bar_s_(std::move(x_bar_s)),
      Q_v_(std::move(Q_v)) {
  if (n_x_ < 1 || static_cast<int>(entries_.size()) < n_x_) {
    throw ValidationError("ObservableLibrary: need at least n_x entries");
  }
  for (int k = 0; k < n_x_; ++k) {
    if (entries_[k].kind != Observable::Kind::kState || entries_[k].i != k) {
      throw ValidationError(
          "ObservableLibrary: entries 1..n_x must be the state coordinates");
    }
  }
  for (int k = 0; k < n_z(); ++k) {
    const Observable& o = entries_[k];
    if (o.i < 0 || o.i >= n_x_ || o.j < 0 || o.j >= n_x_) {
      throw ValidationError("ObservableLibrary: observable '" + o.name() +
                            "' references a state outside 1..n_x");
    }
    if (o.kind == Observable::Kind::kLyapunov) {
      if (j_v_) {
        throw ValidationError("ObservableLibrary: more than one Lyapunov entry");
      }
      j_v_ = k;
    }
  }
  if (j_v_) {
    require_size(x_bar_s_, n_x_, "ObservableLibrary: x_bar_s");
    require_shape(Q_v_, n_x_, n_x_, "ObservableLibrary: Q_v");
    if ((Q_v_ - Q_v_.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * std::max(1.0, Q_v_.cwiseAbs().maxCoeff())) {
      throw ValidationError("ObservableLibrary: Q_v must be symmetric");
    }
    Eigen::LLT<MatrixXd> llt(Q_v_);
    if (llt.info() != Eigen::Success) {
      throw ValidationError("ObservableLibrary: Q_v must be positive definite");
    }
  }
}

ObservableLibrary ObservableLibrary::cstr_default(const VectorXd& x_bar_s,
                                                  const MatrixXd& Q_v) {
  using K = Observable::Kind;
  std::vector<Observable> e = {
      {K::kState, 0, 0},     {K::kState, 1, 0},  {K::kState, 2, 0},
      {K::kSquare, 0, 0},    {K::kSquare, 1, 0}, {K::kCross, 0, 1},
      {K::kArrhenius, 0, 1}, {K::kLyapunov, 0, 0}};
  return ObservableLibrary(3, std::move(e), x_bar_s, Q_v);
}

ObservableLibrary ObservableLibrary::state_only(int n_x) {
  std::vector<Observable> e;
  for (int k = 0; k < n_x; ++k) e.push_back({Observable::Kind::kState, k, 0});
  return ObservableLibrary(n_x, std::move(e), VectorXd::Zero(n_x),
                           MatrixXd::Identity(n_x, n_x));
}

VectorXd ObservableLibrary::lift(const VectorXd& x) const {
  require_size(x, n_x_, "lift: x");
  VectorXd z(n_z());
  for (int k = 0; k < n_z(); ++k) {
    const Observable& o = entries_[k];
    switch (o.kind) {
      case Observable::Kind::kState:
        z(k) = x(o.i);
        break;
      case Observable::Kind::kSquare:
        z(k) = x(o.i) * x(o.i);
        break;
      case Observable::Kind::kCross:
        z(k) = x(o.i) * x(o.j);
        break;
      case Observable::Kind::kArrhenius:
        z(k) = x(o.i) * std::exp(-1.0 / x(o.j));
        break;
      case Observable::Kind::kLyapunov: {
        const VectorXd e = x - x_bar_s_;
        z(k) = e.dot(Q_v_ * e);
        break;
      }
    }
  }
  return z;
}

MatrixXd ObservableLibrary::lift_rows(const MatrixXd& X) const {
  MatrixXd Z(X.rows(), n_z());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    Z.row(r) = lift(X.row(r).transpose()).transpose();
  }
  return Z;
}

std::vector<std::string> ObservableLibrary::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& o : entries_) out.push_back(o.name());
  return out;
}

MatrixXd ObservableLibrary::state_selector() const {
  MatrixXd D = MatrixXd::Zero(n_x_, n_z());
  D.leftCols(n_x_).setIdentity();
  return D;
}

RowVectorXd ObservableLibrary::lyapunov_selector() const {
  if (!j_v_) {
    throw ValidationError("library has no Lyapunov observable");
  }
  RowVectorXd D = RowVectorXd::Zero(n_z());
  D(*j_v_) = 1.0;
  return D;
}

LyapunovSpec LyapunovSpec::from_library(const ObservableLibrary& lib,
                                        double r) {
  if (!lib.lyapunov_index() || lib.n_z() < lib.n_x() + 1) {
    throw ValidationError(
        "LyapunovSpec: library needs a Lyapunov observable and n_z >= n_x + 1");
  }
  if (!(r > 0.0)) throw ValidationError("LyapunovSpec: r must be positive");
  LyapunovSpec spec;
  spec.Q_v = lib.Q_v();
  spec.z_bar_s = lib.lift(lib.x_bar_s());
  spec.r = r;
  spec.D_x = lib.state_selector();
  spec.D_v = lib.lyapunov_selector();
  return spec;
}

double lyapunov_value(const LyapunovSpec& spec, const VectorXd& x,
                      const VectorXd& x_bar) {
  require_size(x, spec.n_x(), "lyapunov_value: x");
  require_size(x_bar, spec.n_x(), "lyapunov_value: x_bar");
  const VectorXd e = x - x_bar;
  return e.dot(spec.Q_v * e);
}

ShiftedLyapunov shifted_coeffs(const LyapunovSpec& spec,
                               const VectorXd& z_bar) {
  require_size(z_bar, spec.n_z(), "shifted_coeffs: z_bar");
  const MatrixXd W = spec.lifted_weight();
  ShiftedLyapunov out;
  out.F_v = spec.D_v + 2.0 * (spec.z_bar_s - z_bar).transpose() * W;
  out.c_shift = z_bar.dot(W * z_bar) - spec.z_bar_s.dot(W * spec.z_bar_s);
  return out;
}

double lyapunov_level_from_data(const LyapunovSpec& spec,
                                const MatrixXd& lifted_rows, double quantile) {
  if (lifted_rows.rows() == 0) {
    throw ValidationError("lyapunov_level_from_data: empty data");
  }
  const VectorXd v = lifted_rows * spec.D_v.transpose();
  std::vector<double> values(v.data(), v.data() + v.size());
  std::sort(values.begin(), values.end());
  const double pos = quantile * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

}  // namespace klmpc
