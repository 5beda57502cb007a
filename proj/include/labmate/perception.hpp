#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace labmate {

enum class ClassLabel { HumanChemist, Instrument, Fumehood };

std::string_view to_string(ClassLabel label);
/// Parses the serialized name; throws SchemaError("label") for anything
/// outside the closed set.
ClassLabel parse_label(std::string_view name);
bool is_equipment(ClassLabel label);

enum class Scenario { S1, S2, S3, Unknown };

std::string_view to_string(Scenario scenario);
Scenario parse_scenario(std::string_view name);

struct Position3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  bool is_finite() const;
  double norm() const;

  friend Position3 operator+(const Position3& a, const Position3& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
  }
  friend Position3 operator-(const Position3& a, const Position3& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend Position3 operator*(double s, const Position3& p) { return {s * p.x, s * p.y, s * p.z}; }
  friend bool operator==(const Position3&, const Position3&) = default;
};

double dot(const Position3& a, const Position3& b);
/// Euclidean distance, evaluated as sqrt(dx*dx + dy*dy + dz*dz) in that order.
double distance(const Position3& a, const Position3& b);

/// Rigid transform mapping camera-frame points into the robot frame:
/// p_robot = rotation * p_camera + translation.
struct RigidTransform {
  std::array<std::array<double, 3>, 3> rotation{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Position3 translation{};

  Position3 apply(const Position3& p) const;
  Position3 apply_inverse(const Position3& p) const;
  bool is_orthonormal(double tol = 1e-9) const;

  static RigidTransform identity() { return {}; }
};

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  RigidTransform extrinsic{};

  /// Throws ValueError when focal lengths are non-positive or the rotation is
  /// not orthonormal.
  void validate() const;
};

struct BoundingBox {
  double u_min = 0.0;
  double v_min = 0.0;
  double u_max = 0.0;
  double v_max = 0.0;

  double center_u() const { return 0.5 * (u_min + u_max); }
  double center_v() const { return 0.5 * (v_min + v_max); }
};

struct Detection {
  ClassLabel label = ClassLabel::HumanChemist;
  BoundingBox bbox{};
  std::optional<double> depth_m;
  double confidence = 1.0;
  int instance_id = 0;
};

struct SceneObject {
  ClassLabel label = ClassLabel::HumanChemist;
  int instance_id = 0;
  Position3 position{};

  /// "human_chemist[0]" style name used in prompts and reports.
  std::string name() const;
};

struct TruthLabels {
  bool obstruction = false;
  bool interaction = false;
  friend bool operator==(const TruthLabels&, const TruthLabels&) = default;
};

struct Scene {
  std::string scene_id;
  Scenario scenario = Scenario::Unknown;
  std::vector<SceneObject> objects;
  std::optional<Position3> goal;
  std::optional<std::string> image_ref;
  std::optional<TruthLabels> truth;
  /// Non-fatal ingestion notes: dropped detections, ignored keys.
  std::vector<std::string> warnings;

  std::size_t human_count() const;
};

/// Projects a robot-frame point to pixel coordinates; the inverse of
/// back_project for a bbox centred on the returned pixel.
std::array<double, 2> project(const Position3& robot_point, const CameraIntrinsics& cam);

Position3 back_project(const Detection& det, const CameraIntrinsics& cam);

struct IngestOptions {
  /// Reject unknown keys instead of recording a warning.
  bool strict = false;
};

Scene ingest_scene(const nlohmann::json& record, const IngestOptions& options = {});
Scene ingest_scene_line(std::string_view line, const IngestOptions& options = {});

/// Serializes a localized scene back into the JSONL record schema.
nlohmann::json scene_to_json(const Scene& scene);

/// Per-human extracts used by the rule engine and the prompt builder.
struct HumanExtract {
  std::size_t node = 0;  ///< node index in the report (robot is node 0)
  int instance_id = 0;
  std::optional<double> human_equipment_m;  ///< nearest instrument or fumehood
  double human_robot_m = 0.0;
};

/// Pairwise distances over the robot origin (node 0) followed by the scene
/// objects in order (node i + 1). Each unordered pair is stored once.
class DistanceReport {
 public:
  DistanceReport() = default;
  DistanceReport(std::vector<std::string> names, std::vector<Position3> positions);

  std::size_t node_count() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Position3>& positions() const { return positions_; }

  /// d_ij for i != j, in either argument order. Throws std::out_of_range for
  /// i == j or indices outside the node set.
  double at(std::size_t i, std::size_t j) const;
  std::size_t pair_count() const { return entries_.size(); }

  const std::vector<HumanExtract>& humans() const { return humans_; }

 private:
  friend DistanceReport distance_matrix(const Scene& scene);
  std::size_t slot(std::size_t i, std::size_t j) const;

  std::vector<std::string> names_;
  std::vector<Position3> positions_;
  std::vector<double> entries_;
  std::vector<HumanExtract> humans_;
};

DistanceReport distance_matrix(const Scene& scene);

}  // namespace labmate
