#pragma once

// Differential-drive kinematics: twist <-> wheel speeds and exact-arc pose
// integration under a constant twist.

#include "rdis/error.hpp"

namespace rdis::kinematics {

struct Twist {
  double linear_mps = 0.0;
  double angular_radps = 0.0;
};

struct WheelSpeeds {
  double left_mps = 0.0;
  double right_mps = 0.0;
};

/// theta is kept in (-pi, pi].
struct Pose {
  double x_m = 0.0;
  double y_m = 0.0;
  double theta_rad = 0.0;
};

/// Below this |omega * dt| the arc is treated as a straight segment.
inline constexpr double kStraightThreshold = 1e-9;

/// Throws Error "bad-track" unless wheel_track_m > 0 (and finite).
WheelSpeeds inverse(const Twist& t, double wheel_track_m);
Twist forward(const WheelSpeeds& w, double wheel_track_m);

/// Throws Error "negative-dt" if dt_s < 0.
Pose integrate_pose(const Pose& p, const Twist& t, double dt_s);

/// Maps any finite angle into (-pi, pi].
double normalize_angle(double theta);

}  // namespace rdis::kinematics
