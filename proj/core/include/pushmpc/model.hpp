// Copyright 2026 The pushmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

/// Quasi-static pusher-slider model: limit surface, motion cone and the
/// three-mode hybrid motion equations.
///
/// Frames: the slider pose (x, y, theta) is expressed in the world frame; the
/// pusher sits on the back face of the slider at body coordinates (p_x, p_y)
/// with p_x = -side_a / 2 fixed. Pusher velocities are resolved in the body
/// frame: v_n along the pushing direction, v_t along the face.
namespace pushmpc {

class ParameterError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physical inputs. Everything else in ModelParams is derived from these.
struct PhysicalParams {
  double mu_p = 0.3;     // pusher-slider friction
  double mu_g = 0.35;    // slider-ground friction
  double mass = 1.05;    // kg
  double gravity = 9.81; // m/s^2
  double side_a = 0.09;  // m, extent along the pushing direction
  double side_b = 0.09;  // m, extent along the contact face
};

/// Physical inputs plus the derived limit-surface quantities. Build through
/// compute_limit_surface(); the derived fields are never read from outside.
struct ModelParams {
  PhysicalParams physical;
  double area = 0.0;  // m^2
  double f_max = 0.0; // N
  double m_max = 0.0; // N m
  double c = 0.0;     // m, m_max / f_max
  double p_x = 0.0;   // m, contact face abscissa in the body frame

  double mu_p() const { return physical.mu_p; }
  double half_face() const { return 0.5 * physical.side_b; }
};

struct SliderState {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double p_y = 0.0;

  Eigen::Vector4d vec() const { return {x, y, theta, p_y}; }
  static SliderState from(const Eigen::Vector4d& v) { return {v[0], v[1], v[2], v[3]}; }

  friend bool operator==(const SliderState&, const SliderState&) = default;
};

struct PusherInput {
  double v_n = 0.0;
  double v_t = 0.0;

  Eigen::Vector2d vec() const { return {v_n, v_t}; }
  static PusherInput from(const Eigen::Vector2d& v) { return {v[0], v[1]}; }

  friend bool operator==(const PusherInput&, const PusherInput&) = default;
};

struct MotionCone {
  double gamma_t = 0.0;
  double gamma_b = 0.0;
};

enum class ContactMode { Sticking = 0, SlidingUp = 1, SlidingDown = 2 };

inline constexpr ContactMode kAllModes[] = {ContactMode::Sticking, ContactMode::SlidingUp,
                                            ContactMode::SlidingDown};

/// One-letter tag used in schedule labels: S, U or D.
char mode_letter(ContactMode mode);
std::string_view mode_name(ContactMode mode);

/// Mean distance from the centroid over a side_a x side_b rectangle,
/// integrated with a composite tensor Gauss-Legendre rule on a
/// 2^level x 2^level grid per quadrant.
double mean_center_distance(double side_a, double side_b, int level);

/// Same quantity refined by doubling the level until two successive levels
/// agree to rel_tol.
double mean_center_distance(double side_a, double side_b);

/// Derives area, f_max, m_max, c and p_x. Throws ParameterError on a
/// non-physical input.
ModelParams compute_limit_surface(const PhysicalParams& physical);

MotionCone motion_cone(const SliderState& state, const ModelParams& params);

/// Closed sticking cone: the boundary belongs to Sticking.
ContactMode classify_mode(const PusherInput& u, const MotionCone& mc);

/// The matrix mapping u to the state derivative for a mode; the motion
/// equations are linear in u so f_j(x, u) = input_matrix(x, j) * u.
Eigen::Matrix<double, 4, 2> input_matrix(const SliderState& state, ContactMode mode,
                                         const ModelParams& params);

Eigen::Vector4d mode_dynamics(const SliderState& state, const PusherInput& u, ContactMode mode,
                              const ModelParams& params);

struct StepOutcome {
  SliderState state;
  ContactMode mode = ContactMode::Sticking;  // mode realized in the first substep
  bool clamped = false;                      // p_y hit the face edge
};

inline constexpr int kPlantSubsteps = 10;

/// Explicit Euler over kPlantSubsteps substeps, reclassifying the contact
/// mode every substep unless `forced` is set. Throws NumericError when the
/// result is not finite.
StepOutcome step(const SliderState& state, const PusherInput& u, double dt,
                 const ModelParams& params, std::optional<ContactMode> forced = std::nullopt);

}  // namespace pushmpc
