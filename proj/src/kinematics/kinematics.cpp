#include "rdis/kinematics.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace rdis::kinematics {
namespace {

void check_track(double wheel_track_m) {
  if (!(wheel_track_m > 0.0) || !std::isfinite(wheel_track_m)) {
    throw Error("bad-track", "wheel track must be positive, got " + std::to_string(wheel_track_m));
  }
}

}  // namespace

WheelSpeeds inverse(const Twist& t, double wheel_track_m) {
  check_track(wheel_track_m);
  double half = t.angular_radps * wheel_track_m / 2.0;
  return {t.linear_mps - half, t.linear_mps + half};
}

Twist forward(const WheelSpeeds& w, double wheel_track_m) {
  check_track(wheel_track_m);
  return {(w.left_mps + w.right_mps) / 2.0, (w.right_mps - w.left_mps) / wheel_track_m};
}

double normalize_angle(double theta) {
  constexpr double kPi = std::numbers::pi;
  if (theta > -kPi && theta <= kPi) return theta;
  double r = std::remainder(theta, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

Pose integrate_pose(const Pose& p, const Twist& t, double dt_s) {
  if (dt_s < 0.0 || std::isnan(dt_s)) {
    throw Error("negative-dt", "dt must be non-negative, got " + std::to_string(dt_s));
  }
  const double v = t.linear_mps;
  const double w = t.angular_radps;
  Pose out = p;
  if (std::fabs(w) * dt_s < kStraightThreshold) {
    out.x_m += v * dt_s * std::cos(p.theta_rad);
    out.y_m += v * dt_s * std::sin(p.theta_rad);
    out.theta_rad = normalize_angle(p.theta_rad);
    return out;
  }
  // Unnormalized end heading keeps the sin/cos differences exact across the
  // +-pi seam; only the stored heading is wrapped.
  const double theta_end = p.theta_rad + w * dt_s;
  if (v != 0.0) {
    const double radius = v / w;
    out.x_m += radius * (std::sin(theta_end) - std::sin(p.theta_rad));
    out.y_m -= radius * (std::cos(theta_end) - std::cos(p.theta_rad));
  }
  out.theta_rad = normalize_angle(theta_end);
  return out;
}

}  // namespace rdis::kinematics
