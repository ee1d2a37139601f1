// Lie-group arithmetic for planar and spatial rigid-body poses.
//
// Tangent coordinates are ordered translation first for both groups:
//   SE(2): (x, y, theta)
//   SE(3): (vx, vy, vz, wx, wy, wz)
// which matches the ordering of g2o information matrices.
//
// retract(p, d) = p * Exp(d) and local(a, b) = Log(a^-1 * b), so all
// perturbations are applied on the right.
#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace risam {

namespace internal {

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> skew(const Eigen::Matrix<Scalar, 3, 1>& w) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << Scalar(0), -w.z(), w.y(),  //
      w.z(), Scalar(0), -w.x(),   //
      -w.y(), w.x(), Scalar(0);
  return m;
}

/// Left Jacobian of SO(3).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3LeftJacobian(const Eigen::Matrix<Scalar, 3, 1>& phi) {
  using std::cos;
  using std::sin;
  const Scalar theta2 = phi.squaredNorm();
  const Eigen::Matrix<Scalar, 3, 3> K = skew(phi);
  Scalar a, b;
  if (theta2 < Scalar(1e-8)) {
    a = Scalar(0.5) - theta2 / Scalar(24);
    b = Scalar(1) / Scalar(6) - theta2 / Scalar(120);
  } else {
    const Scalar theta = std::sqrt(theta2);
    a = (Scalar(1) - cos(theta)) / theta2;
    b = (theta - sin(theta)) / (theta2 * theta);
  }
  return Eigen::Matrix<Scalar, 3, 3>::Identity() + a * K + b * K * K;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> so3LeftJacobianInverse(const Eigen::Matrix<Scalar, 3, 1>& phi) {
  using std::cos;
  using std::sin;
  const Scalar theta2 = phi.squaredNorm();
  const Eigen::Matrix<Scalar, 3, 3> K = skew(phi);
  Scalar c;
  if (theta2 < Scalar(1e-8)) {
    c = Scalar(1) / Scalar(12) + theta2 / Scalar(720);
  } else {
    const Scalar theta = std::sqrt(theta2);
    c = Scalar(1) / theta2 - (Scalar(1) + cos(theta)) / (Scalar(2) * theta * sin(theta));
  }
  return Eigen::Matrix<Scalar, 3, 3>::Identity() - Scalar(0.5) * K + c * K * K;
}

/// Coupling block of the SE(3) left Jacobian for xi = (rho, phi).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> se3Q(const Eigen::Matrix<Scalar, 3, 1>& rho,
                                 const Eigen::Matrix<Scalar, 3, 1>& phi) {
  using std::cos;
  using std::sin;
  const Eigen::Matrix<Scalar, 3, 3> P = skew(phi);
  const Eigen::Matrix<Scalar, 3, 3> R = skew(rho);
  const Scalar theta2 = phi.squaredNorm();
  Scalar c1, c2, c3;
  if (theta2 < Scalar(1e-6)) {
    c1 = Scalar(1) / Scalar(6) - theta2 / Scalar(120);
    c2 = Scalar(1) / Scalar(24) - theta2 / Scalar(720);
    c3 = Scalar(1) / Scalar(120) - theta2 / Scalar(2520);
  } else {
    const Scalar theta = std::sqrt(theta2);
    const Scalar s = sin(theta), c = cos(theta);
    c1 = (theta - s) / (theta2 * theta);
    c2 = (theta2 + Scalar(2) * c - Scalar(2)) / (Scalar(2) * theta2 * theta2);
    c3 = (Scalar(2) * theta - Scalar(3) * s + theta * c) / (Scalar(2) * theta2 * theta2 * theta);
  }
  const Eigen::Matrix<Scalar, 3, 3> PR = P * R;
  const Eigen::Matrix<Scalar, 3, 3> RP = R * P;
  const Eigen::Matrix<Scalar, 3, 3> PRP = PR * P;
  return Scalar(0.5) * R + c1 * (PR + RP + PRP) + c2 * (P * PR + RP * P - Scalar(3) * PRP) +
         c3 * (PRP * P + P * PRP);
}

/// Inverse of the SE(3) left Jacobian, xi ordered (rho, phi).
template <typename Scalar>
Eigen::Matrix<Scalar, 6, 6> se3LeftJacobianInverse(const Eigen::Matrix<Scalar, 6, 1>& xi) {
  const Eigen::Matrix<Scalar, 3, 1> rho = xi.template head<3>();
  const Eigen::Matrix<Scalar, 3, 1> phi = xi.template tail<3>();
  const Eigen::Matrix<Scalar, 3, 3> Jinv = so3LeftJacobianInverse(phi);
  const Eigen::Matrix<Scalar, 3, 3> Q = se3Q(rho, phi);
  Eigen::Matrix<Scalar, 6, 6> out = Eigen::Matrix<Scalar, 6, 6>::Zero();
  out.template topLeftCorner<3, 3>() = Jinv;
  out.template topRightCorner<3, 3>() = -Jinv * Q * Jinv;
  out.template bottomRightCorner<3, 3>() = Jinv;
  return out;
}

template <typename Scalar>
Scalar wrapAngle(Scalar a) {
  const Scalar pi = std::numbers::pi_v<Scalar>;
  a = std::remainder(a, Scalar(2) * pi);  // [-pi, pi]
  if (a <= -pi) a += Scalar(2) * pi;
  return a;
}

}  // namespace internal

// ---------------------------------------------------------------------------
// SE(2)
// ---------------------------------------------------------------------------

template <typename Scalar_>
class Pose2T {
 public:
  using Scalar = Scalar_;
  static constexpr int kDim = 3;
  using Tangent = Eigen::Matrix<Scalar, 3, 1>;
  using Jacobian = Eigen::Matrix<Scalar, 3, 3>;
  using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
  using Rotation2 = Eigen::Matrix<Scalar, 2, 2>;

  Pose2T() = default;
  Pose2T(Scalar x, Scalar y, Scalar theta) : t_(x, y), theta_(internal::wrapAngle(theta)) {}
  Pose2T(const Vector2& t, Scalar theta) : t_(t), theta_(internal::wrapAngle(theta)) {}

  static Pose2T Identity() { return Pose2T(); }

  Scalar x() const { return t_.x(); }
  Scalar y() const { return t_.y(); }
  Scalar theta() const { return theta_; }
  const Vector2& translation() const { return t_; }

  Rotation2 rotation() const {
    const Scalar c = std::cos(theta_), s = std::sin(theta_);
    Rotation2 R;
    R << c, -s, s, c;
    return R;
  }

  Pose2T operator*(const Pose2T& other) const {
    return Pose2T(t_ + rotation() * other.t_, theta_ + other.theta_);
  }

  Pose2T inverse() const { return Pose2T(-(rotation().transpose() * t_), -theta_); }

  Jacobian adjoint() const {
    Jacobian A = Jacobian::Zero();
    A.template topLeftCorner<2, 2>() = rotation();
    A(0, 2) = t_.y();
    A(1, 2) = -t_.x();
    A(2, 2) = Scalar(1);
    return A;
  }

  static Pose2T Exp(const Tangent& xi) {
    const Scalar w = xi(2);
    Rotation2 V;
    if (std::abs(w) < Scalar(1e-10)) {
      V << Scalar(1) - w * w / Scalar(6), -w / Scalar(2),  //
          w / Scalar(2), Scalar(1) - w * w / Scalar(6);
    } else {
      const Scalar s = std::sin(w), c = std::cos(w);
      V << s / w, -(Scalar(1) - c) / w,  //
          (Scalar(1) - c) / w, s / w;
    }
    return Pose2T(V * xi.template head<2>(), w);
  }

  static Tangent Log(const Pose2T& p) {
    const Scalar w = p.theta_;
    Scalar a;  // (w/2) cot(w/2)
    if (std::abs(w) < Scalar(1e-10)) {
      a = Scalar(1) - w * w / Scalar(12);
    } else {
      a = (w / Scalar(2)) / std::tan(w / Scalar(2));
    }
    Rotation2 Vinv;
    Vinv << a, w / Scalar(2),  //
        -w / Scalar(2), a;
    Tangent out;
    out.template head<2>() = Vinv * p.t_;
    out(2) = w;
    return out;
  }

  /// d Log(T * Exp(eta)) / d eta at eta = 0, evaluated through the planar
  /// embedding in SE(3).
  static Jacobian LogRightJacobianInverse(const Tangent& xi) {
    Eigen::Matrix<Scalar, 6, 1> xi3;
    xi3 << xi(0), xi(1), Scalar(0), Scalar(0), Scalar(0), xi(2);
    const Eigen::Matrix<Scalar, 6, 6> J = internal::se3LeftJacobianInverse<Scalar>(-xi3);
    constexpr int idx[3] = {0, 1, 5};
    Jacobian out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out(r, c) = J(idx[r], idx[c]);
    return out;
  }

  template <typename Other>
  Pose2T<Other> cast() const {
    return Pose2T<Other>(Other(t_.x()), Other(t_.y()), Other(theta_));
  }

 private:
  Vector2 t_ = Vector2::Zero();
  Scalar theta_ = Scalar(0);
};

// ---------------------------------------------------------------------------
// SE(3)
// ---------------------------------------------------------------------------

template <typename Scalar_>
class Pose3T {
 public:
  using Scalar = Scalar_;
  static constexpr int kDim = 6;
  using Tangent = Eigen::Matrix<Scalar, 6, 1>;
  using Jacobian = Eigen::Matrix<Scalar, 6, 6>;
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Quaternion = Eigen::Quaternion<Scalar>;

  Pose3T() = default;
  /// The quaternion is normalized on construction.
  Pose3T(const Quaternion& q, const Vector3& t) : q_(q.normalized()), t_(t) {}
  Pose3T(const Matrix3& R, const Vector3& t) : q_(Quaternion(R).normalized()), t_(t) {}

  static Pose3T Identity() { return Pose3T(); }

  const Quaternion& quaternion() const { return q_; }
  Matrix3 rotation() const { return q_.toRotationMatrix(); }
  const Vector3& translation() const { return t_; }

  Pose3T operator*(const Pose3T& other) const { return Pose3T(q_ * other.q_, t_ + q_ * other.t_); }

  Pose3T inverse() const {
    const Quaternion qi = q_.conjugate();
    return Pose3T(qi, -(qi * t_));
  }

  Jacobian adjoint() const {
    const Matrix3 R = rotation();
    Jacobian A = Jacobian::Zero();
    A.template topLeftCorner<3, 3>() = R;
    A.template topRightCorner<3, 3>() = internal::skew(t_) * R;
    A.template bottomRightCorner<3, 3>() = R;
    return A;
  }

  static Quaternion ExpSO3(const Vector3& w) {
    const Scalar theta2 = w.squaredNorm();
    Scalar real, imag;
    if (theta2 < Scalar(1e-12)) {
      real = Scalar(1) - theta2 / Scalar(8);
      imag = Scalar(0.5) - theta2 / Scalar(48);
    } else {
      const Scalar theta = std::sqrt(theta2);
      real = std::cos(theta / Scalar(2));
      imag = std::sin(theta / Scalar(2)) / theta;
    }
    return Quaternion(real, imag * w.x(), imag * w.y(), imag * w.z()).normalized();
  }

  /// Rotation vector of a unit quaternion, angle in [0, pi]. At exactly pi the
  /// axis is chosen with a non-negative first nonzero component.
  static Vector3 LogSO3(const Quaternion& q_in) {
    Quaternion q = q_in;
    if (q.w() < Scalar(0)) q.coeffs() = -q.coeffs();
    Vector3 v = q.vec();
    const Scalar n = v.norm();
    const Scalar w = q.w();
    if (n < Scalar(1e-10)) {
      // theta / n ~= 2 / w (1 - n^2 / (3 w^2))
      return (Scalar(2) / w) * (Scalar(1) - n * n / (Scalar(3) * w * w)) * v;
    }
    if (w == Scalar(0)) {
      for (int i = 0; i < 3; ++i) {
        if (v(i) != Scalar(0)) {
          if (v(i) < Scalar(0)) v = -v;
          break;
        }
      }
    }
    const Scalar theta = Scalar(2) * std::atan2(n, w);
    return (theta / n) * v;
  }

  static Pose3T Exp(const Tangent& xi) {
    const Vector3 rho = xi.template head<3>();
    const Vector3 phi = xi.template tail<3>();
    return Pose3T(ExpSO3(phi), internal::so3LeftJacobian(phi) * rho);
  }

  static Tangent Log(const Pose3T& p) {
    const Vector3 phi = LogSO3(p.q_);
    Tangent out;
    out.template head<3>() = internal::so3LeftJacobianInverse(phi) * p.t_;
    out.template tail<3>() = phi;
    return out;
  }

  /// d Log(T * Exp(eta)) / d eta at eta = 0 where xi = Log(T).
  static Jacobian LogRightJacobianInverse(const Tangent& xi) {
    return internal::se3LeftJacobianInverse<Scalar>(-xi);
  }

  template <typename Other>
  Pose3T<Other> cast() const {
    return Pose3T<Other>(q_.template cast<Other>(), t_.template cast<Other>());
  }

 private:
  Quaternion q_ = Quaternion::Identity();
  Vector3 t_ = Vector3::Zero();
};

using Pose2 = Pose2T<double>;
using Pose3 = Pose3T<double>;

// ---------------------------------------------------------------------------
// Free functions shared by both groups.
// ---------------------------------------------------------------------------

template <typename Pose>
Pose compose(const Pose& a, const Pose& b) {
  return a * b;
}

template <typename Pose>
Pose inverse(const Pose& p) {
  return p.inverse();
}

/// inverse(a) * b
template <typename Pose>
Pose between(const Pose& a, const Pose& b) {
  return a.inverse() * b;
}

template <typename Pose>
Pose retract(const Pose& p, const typename Pose::Tangent& delta) {
  return p * Pose::Exp(delta);
}

/// Runtime-sized variant; throws std::invalid_argument on a dimension mismatch.
template <typename Pose, typename Derived>
Pose retractDynamic(const Pose& p, const Eigen::MatrixBase<Derived>& delta) {
  if (delta.size() != Pose::kDim) {
    throw std::invalid_argument("retract: tangent dimension " + std::to_string(delta.size()) +
                                " does not match group dimension " + std::to_string(Pose::kDim));
  }
  return retract(p, typename Pose::Tangent(delta));
}

template <typename Pose>
typename Pose::Tangent local(const Pose& a, const Pose& b) {
  return Pose::Log(between(a, b));
}

}  // namespace risam
