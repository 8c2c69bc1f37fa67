#include <cmath>
#include <numbers>
#include <string>

#include <gtest/gtest.h>

#include "nugr/attributes.hpp"
#include "nugr/rng.hpp"
#include "nugr/scene.hpp"

namespace {

using nugr::MovementState;
using nugr::RelationshipSector;

nugr::InstanceAnnotation inst(const std::string& id, double x, double y) {
  nugr::InstanceAnnotation a;
  a.instance_id = id;
  a.center = {x, y, 0.0};
  return a;
}

nugr::SceneFrame frame(const std::string& id, std::int64_t t_us,
                       std::vector<nugr::InstanceAnnotation> instances) {
  nugr::SceneFrame f;
  f.frame_id = id;
  f.timestamp_us = t_us;
  f.instances = std::move(instances);
  return f;
}

TEST(Speed, ForwardDifference) {
  nugr::Scene s{"s", {frame("a", 0, {inst("x", 0, 0)}), frame("b", 500'000, {inst("x", 1, 0)})}};
  EXPECT_DOUBLE_EQ(*nugr::estimate_speed(s, "x", 0), 2.0);
  // Last frame falls back to the previous occurrence.
  EXPECT_DOUBLE_EQ(*nugr::estimate_speed(s, "x", 1), 2.0);
}

TEST(Speed, SingleObservationIsUnknown) {
  nugr::Scene s{"s", {frame("a", 0, {inst("x", 0, 0)}), frame("b", 500'000, {})}};
  EXPECT_FALSE(nugr::estimate_speed(s, "x", 0).has_value());
  EXPECT_EQ(nugr::classify_movement(nugr::estimate_speed(s, "x", 0)), MovementState::Unknown);
}

TEST(Speed, SlowObjectIsStopped) {
  nugr::Scene s{"s", {frame("a", 0, {inst("x", 0, 0)}), frame("b", 1'000'000, {inst("x", 0.1, 0)})}};
  const auto v = nugr::estimate_speed(s, "x", 0);
  EXPECT_NEAR(*v, 0.1, 1e-15);
  EXPECT_EQ(nugr::classify_movement(v), MovementState::Stopped);
}

TEST(Speed, SkipsFramesWithoutTheInstanceAndIgnoresZ) {
  auto far = inst("x", 3, 4);
  far.center[2] = 100.0;
  nugr::Scene s{"s", {frame("a", 0, {inst("x", 0, 0)}), frame("b", 1'000'000, {}),
                      frame("c", 2'000'000, {far})}};
  EXPECT_DOUBLE_EQ(*nugr::estimate_speed(s, "x", 0), 2.5);
}

TEST(Speed, MissingInstanceThrows) {
  nugr::Scene s{"s", {frame("a", 0, {inst("x", 0, 0)})}};
  EXPECT_THROW(nugr::estimate_speed(s, "y", 0), nugr::InstanceNotFound);
}

TEST(Speed, TranslationInvariant) {
  nugr::SplitMix64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const double x0 = rng.uniform(-50, 50), y0 = rng.uniform(-50, 50);
    const double x1 = rng.uniform(-50, 50), y1 = rng.uniform(-50, 50);
    const double sx = rng.uniform(-1e3, 1e3), sy = rng.uniform(-1e3, 1e3);
    nugr::Scene a{"s", {frame("a", 0, {inst("x", x0, y0)}), frame("b", 700'000, {inst("x", x1, y1)})}};
    nugr::Scene b{"s", {frame("a", 0, {inst("x", x0 + sx, y0 + sy)}),
                        frame("b", 700'000, {inst("x", x1 + sx, y1 + sy)})}};
    for (auto& f : b.frames) f.ego_pose.translation = {sx, sy, 0};
    EXPECT_NEAR(*nugr::estimate_speed(a, "x", 0), *nugr::estimate_speed(b, "x", 0), 1e-9);
  }
}

TEST(Movement, ThresholdBoundaries) {
  EXPECT_EQ(nugr::classify_movement(0.0), MovementState::Stopped);
  EXPECT_EQ(nugr::classify_movement(0.29), MovementState::Stopped);
  EXPECT_EQ(nugr::classify_movement(0.31), MovementState::Moving);
  EXPECT_EQ(nugr::classify_movement(0.3), MovementState::Moving);
  EXPECT_EQ(nugr::classify_movement(std::nullopt), MovementState::Unknown);
}

TEST(Relationship, Examples) {
  const nugr::EgoPose origin{};
  EXPECT_EQ(nugr::compute_relationship(origin, {10, 0, 0}), RelationshipSector::Front);
  EXPECT_EQ(nugr::compute_relationship(origin, {5, 5, 0}), RelationshipSector::FrontLeft);
  EXPECT_EQ(nugr::compute_relationship(origin, {-10, 0, 0}), RelationshipSector::Back);
  EXPECT_EQ(nugr::compute_relationship(origin, {-10, -0.0, 0}), RelationshipSector::Back);
  const double c30 = std::cos(std::numbers::pi / 6), s30 = std::sin(std::numbers::pi / 6);
  EXPECT_EQ(nugr::compute_relationship(origin, {c30, s30, 0}), RelationshipSector::FrontLeft);
  EXPECT_EQ(nugr::compute_relationship(origin, {0, 5, 0}), RelationshipSector::BackLeft);
  EXPECT_EQ(nugr::compute_relationship(origin, {0, -5, 0}), RelationshipSector::FrontRight);
  EXPECT_EQ(nugr::compute_relationship(origin, {-5, -5, 0}), RelationshipSector::BackRight);
  EXPECT_EQ(nugr::compute_relationship(origin, {5, -1, 0}), RelationshipSector::Front);
}

TEST(Relationship, OriginIsDegenerate) {
  EXPECT_THROW(nugr::compute_relationship({{3, 4, 0}, 0.5}, {3, 4, 9}), nugr::DegenerateInput);
}

TEST(Relationship, AntipodalPointsAreOpposite) {
  nugr::SplitMix64 rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.uniform(-100, 100), y = rng.uniform(-100, 100);
    const auto s = nugr::sector_from_ego_xy(x, y);
    EXPECT_EQ(nugr::sector_from_ego_xy(-x, -y), nugr::opposite(s));
  }
}

TEST(Annotate, FixtureFrameZeroTruthTable) {
  const auto scene = nugr::load_scene(std::string(NUGR_FIXTURE_DIR) + "/basic/scene-0001.json");
  const auto attrs = nugr::annotate_frame(scene, 0);
  ASSERT_EQ(attrs.size(), 6u);
  // Ego yaw 0.25 rad (14.3 deg); bearings below are global bearing - 14.3.
  struct Row {
    const char* id;
    nugr::Category cat;
    const char* color;
    MovementState mv;
    double speed;
    RelationshipSector sector;
  };
  const Row rows[] = {
      {"car-1", nugr::Category::Car, "red", MovementState::Moving, std::hypot(5.0, 1.25), RelationshipSector::Front},       // 5.0 deg
      {"car-2", nugr::Category::Car, "red", MovementState::Moving, std::hypot(4.0, 1.0), RelationshipSector::Front},        // -7.5 deg
      {"bus-1", nugr::Category::Bus, "orange", MovementState::Moving, std::hypot(0.75, 3.0), RelationshipSector::FrontLeft},  // 56.0 deg
      {"pedestrian-1", nugr::Category::Pedestrian, nullptr, MovementState::Stopped, 0.1, RelationshipSector::BackLeft},    // 109.4 deg
      {"truck-1", nugr::Category::Truck, "white", MovementState::Stopped, 0.0, RelationshipSector::Back},                  // 173.3 deg
      {"traffic_cone-1", nugr::Category::TrafficCone, "orange", MovementState::Stopped, 0.0, RelationshipSector::BackRight},  // -139.3 deg
  };
  for (const auto& r : rows) {
    SCOPED_TRACE(r.id);
    const auto& a = attrs.at(r.id);
    EXPECT_EQ(a.category, r.cat);
    EXPECT_EQ(a.appearance.has_value(), r.color != nullptr);
    if (r.color) EXPECT_EQ(*a.appearance, r.color);
    EXPECT_EQ(a.movement, r.mv);
    ASSERT_TRUE(a.speed.has_value());
    EXPECT_NEAR(*a.speed, r.speed, 1e-12);
    EXPECT_EQ(a.relationship, r.sector);
  }
}

TEST(Annotate, EmptyFrame) {
  nugr::Scene s{"s", {frame("a", 0, {})}};
  EXPECT_TRUE(nugr::annotate_frame(s, 0).empty());
}

}  // namespace
