#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>

#include "nugr/error.hpp"
#include "nugr/geometry.hpp"
#include "nugr/scene.hpp"

namespace nugr {

// Speeds at or above this value (m/s) are Moving.
inline constexpr double kMovingSpeedThreshold = 0.3;

enum class MovementState { Moving, Stopped, Unknown };

enum class RelationshipSector { Front, FrontLeft, FrontRight, Back, BackLeft, BackRight };

inline std::string_view to_string(MovementState m) {
  switch (m) {
    case MovementState::Moving: return "moving";
    case MovementState::Stopped: return "stopped";
    case MovementState::Unknown: return "unknown";
  }
  return "unknown";
}

inline std::string_view to_string(RelationshipSector s) {
  switch (s) {
    case RelationshipSector::Front: return "front";
    case RelationshipSector::FrontLeft: return "front_left";
    case RelationshipSector::FrontRight: return "front_right";
    case RelationshipSector::Back: return "back";
    case RelationshipSector::BackLeft: return "back_left";
    case RelationshipSector::BackRight: return "back_right";
  }
  return "front";
}

// Human-readable sector phrase ("front left").
inline std::string sector_phrase(RelationshipSector s) {
  std::string out(to_string(s));
  for (char& c : out) {
    if (c == '_') c = ' ';
  }
  return out;
}

inline RelationshipSector opposite(RelationshipSector s) {
  switch (s) {
    case RelationshipSector::Front: return RelationshipSector::Back;
    case RelationshipSector::Back: return RelationshipSector::Front;
    case RelationshipSector::FrontLeft: return RelationshipSector::BackRight;
    case RelationshipSector::BackRight: return RelationshipSector::FrontLeft;
    case RelationshipSector::FrontRight: return RelationshipSector::BackLeft;
    case RelationshipSector::BackLeft: return RelationshipSector::FrontRight;
  }
  return s;
}

struct AttributeSet {
  Category category = Category::Car;
  std::optional<std::string> appearance;
  MovementState movement = MovementState::Unknown;
  RelationshipSector relationship = RelationshipSector::Front;
  std::optional<double> speed;  // absent iff movement == Unknown
  Vec2 velocity_xy{0.0, 0.0};   // zero when movement == Unknown

  bool operator==(const AttributeSet&) const = default;
};

struct VelocityEstimate {
  Vec2 velocity_xy{0.0, 0.0};
  double speed = 0.0;
};

// Finite-difference BEV velocity of an instance at a frame. Uses the next
// frame that contains the instance, falling back to the previous one.
// Returns nullopt when the instance is observed in exactly one frame.
inline std::optional<VelocityEstimate> estimate_velocity(
    const Scene& scene, std::string_view instance_id, std::size_t frame_index) {
  if (frame_index >= scene.frames.size()) {
    throw InstanceNotFound("frame index out of range",
                           "frames[" + std::to_string(frame_index) + "]");
  }
  const SceneFrame& here = scene.frames[frame_index];
  const InstanceAnnotation* cur = here.find(instance_id);
  if (cur == nullptr) {
    throw InstanceNotFound("instance '" + std::string(instance_id) + "' not in frame",
                           "frames[" + std::to_string(frame_index) + "]");
  }
  auto diff = [&](const SceneFrame& a, const InstanceAnnotation& ia,
                  const SceneFrame& b, const InstanceAnnotation& ib) {
    const double dt = static_cast<double>(b.timestamp_us - a.timestamp_us) * 1e-6;
    VelocityEstimate v;
    v.velocity_xy = {(ib.center[0] - ia.center[0]) / dt,
                     (ib.center[1] - ia.center[1]) / dt};
    v.speed = std::hypot(ib.center[0] - ia.center[0],
                         ib.center[1] - ia.center[1]) / dt;
    return v;
  };
  for (std::size_t f = frame_index + 1; f < scene.frames.size(); ++f) {
    if (const auto* next = scene.frames[f].find(instance_id)) {
      return diff(here, *cur, scene.frames[f], *next);
    }
  }
  for (std::size_t f = frame_index; f-- > 0;) {
    if (const auto* prev = scene.frames[f].find(instance_id)) {
      return diff(scene.frames[f], *prev, here, *cur);
    }
  }
  return std::nullopt;
}

inline std::optional<double> estimate_speed(const Scene& scene,
                                            std::string_view instance_id,
                                            std::size_t frame_index) {
  const auto v = estimate_velocity(scene, instance_id, frame_index);
  if (!v) return std::nullopt;
  return v->speed;
}

inline MovementState classify_movement(std::optional<double> speed) {
  if (!speed) return MovementState::Unknown;
  return *speed >= kMovingSpeedThreshold ? MovementState::Moving
                                         : MovementState::Stopped;
}

// Sector from an ego-frame BEV bearing. Sectors are 60 degrees wide,
// half-open on the counter-clockwise side: Front [-30, 30), FrontLeft
// [30, 90), BackLeft [90, 150), Back [150, 210), BackRight [-150, -90),
// FrontRight [-90, -30).
inline RelationshipSector sector_from_ego_xy(double x, double y) {
  if (x == 0.0 && y == 0.0) {
    throw DegenerateInput("object center coincides with the ego origin");
  }
  constexpr double kPi = std::numbers::pi;
  const double theta = std::atan2(y, x);
  if (theta >= 5.0 * kPi / 6.0 || theta < -5.0 * kPi / 6.0) return RelationshipSector::Back;
  if (theta >= kPi / 2.0) return RelationshipSector::BackLeft;
  if (theta >= kPi / 6.0) return RelationshipSector::FrontLeft;
  if (theta >= -kPi / 6.0) return RelationshipSector::Front;
  if (theta >= -kPi / 2.0) return RelationshipSector::FrontRight;
  return RelationshipSector::BackRight;
}

inline RelationshipSector compute_relationship(const EgoPose& pose,
                                               const Vec3& center) {
  const Vec3 ego = to_ego_frame(pose, center);
  return sector_from_ego_xy(ego[0], ego[1]);
}

inline AttributeSet annotate_instance(const Scene& scene, std::size_t frame_index,
                                      const InstanceAnnotation& inst) {
  const SceneFrame& frame = scene.frames[frame_index];
  AttributeSet a;
  a.category = inst.category;
  a.appearance = inst.color;
  const auto vel = estimate_velocity(scene, inst.instance_id, frame_index);
  if (vel) {
    a.speed = vel->speed;
    a.velocity_xy = vel->velocity_xy;
  }
  a.movement = classify_movement(a.speed);
  a.relationship = compute_relationship(frame.ego_pose, inst.center);
  return a;
}

inline std::map<std::string, AttributeSet> annotate_frame(const Scene& scene,
                                                          std::size_t frame_index) {
  if (frame_index >= scene.frames.size()) {
    throw InstanceNotFound("frame index out of range",
                           "frames[" + std::to_string(frame_index) + "]");
  }
  std::map<std::string, AttributeSet> out;
  for (const auto& inst : scene.frames[frame_index].instances) {
    out.emplace(inst.instance_id, annotate_instance(scene, frame_index, inst));
  }
  return out;
}

}  // namespace nugr
