#include "labmate/perception.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <utility>

#include "labmate/errors.hpp"

namespace labmate {
namespace {

using json = nlohmann::json;

const std::set<std::string> kRecordKeys = {"scene_id", "scenario", "goal",     "objects",
                                           "intrinsics", "truth",  "image_ref"};
const std::set<std::string> kObjectKeys = {"label", "instance_id", "position",
                                           "bbox",  "depth_m",     "confidence"};
const std::set<std::string> kIntrinsicKeys = {"fx", "fy", "cx", "cy", "rotation", "translation"};

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where,
                const IngestOptions& options, std::vector<std::string>& warnings) {
  for (const auto& [key, _] : obj.items()) {
    if (allowed.count(key) != 0) {
      continue;
    }
    const std::string field = where.empty() ? key : where + "." + key;
    if (options.strict) {
      throw SchemaError(field, "unknown key");
    }
    warnings.push_back("ignored unknown key '" + field + "'");
  }
}

double number(const json& value, const std::string& field) {
  if (!value.is_number()) {
    throw SchemaError(field, "expected a number");
  }
  const double v = value.get<double>();
  if (!std::isfinite(v)) {
    throw ValueError("non-finite number at '" + field + "'");
  }
  return v;
}

Position3 vec3(const json& value, const std::string& field) {
  if (!value.is_array() || value.size() != 3) {
    throw SchemaError(field, "expected [x, y, z]");
  }
  return {number(value[0], field + "[0]"), number(value[1], field + "[1]"),
          number(value[2], field + "[2]")};
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(where.empty() ? key : where + "." + key, "missing required key");
  }
  return *it;
}

CameraIntrinsics parse_intrinsics(const json& value, const IngestOptions& options,
                                  std::vector<std::string>& warnings) {
  if (!value.is_object()) {
    throw SchemaError("intrinsics", "expected an object");
  }
  check_keys(value, kIntrinsicKeys, "intrinsics", options, warnings);
  CameraIntrinsics cam;
  cam.fx = number(require(value, "fx", "intrinsics"), "intrinsics.fx");
  cam.fy = number(require(value, "fy", "intrinsics"), "intrinsics.fy");
  cam.cx = number(require(value, "cx", "intrinsics"), "intrinsics.cx");
  cam.cy = number(require(value, "cy", "intrinsics"), "intrinsics.cy");
  if (auto it = value.find("rotation"); it != value.end()) {
    if (!it->is_array() || it->size() != 3) {
      throw SchemaError("intrinsics.rotation", "expected a 3x3 array");
    }
    for (std::size_t r = 0; r < 3; ++r) {
      const Position3 row = vec3((*it)[r], "intrinsics.rotation[" + std::to_string(r) + "]");
      cam.extrinsic.rotation[r] = {row.x, row.y, row.z};
    }
  }
  if (auto it = value.find("translation"); it != value.end()) {
    cam.extrinsic.translation = vec3(*it, "intrinsics.translation");
  }
  cam.validate();
  return cam;
}

}  // namespace

std::string_view to_string(ClassLabel label) {
  switch (label) {
    case ClassLabel::HumanChemist:
      return "human_chemist";
    case ClassLabel::Instrument:
      return "instrument";
    case ClassLabel::Fumehood:
      return "fumehood";
  }
  return "unknown";
}

ClassLabel parse_label(std::string_view name) {
  if (name == "human_chemist") return ClassLabel::HumanChemist;
  if (name == "instrument") return ClassLabel::Instrument;
  if (name == "fumehood") return ClassLabel::Fumehood;
  throw SchemaError("label", "unknown label '" + std::string(name) + "'");
}

bool is_equipment(ClassLabel label) {
  return label == ClassLabel::Instrument || label == ClassLabel::Fumehood;
}

std::string_view to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::S1:
      return "s1";
    case Scenario::S2:
      return "s2";
    case Scenario::S3:
      return "s3";
    case Scenario::Unknown:
      return "unknown";
  }
  return "unknown";
}

Scenario parse_scenario(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "s1") return Scenario::S1;
  if (lower == "s2") return Scenario::S2;
  if (lower == "s3") return Scenario::S3;
  if (lower == "unknown") return Scenario::Unknown;
  throw SchemaError("scenario", "expected s1, s2 or s3, got '" + std::string(name) + "'");
}

bool Position3::is_finite() const {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
}

double Position3::norm() const { return distance(*this, Position3{}); }

double dot(const Position3& a, const Position3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

double distance(const Position3& a, const Position3& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

Position3 RigidTransform::apply(const Position3& p) const {
  const auto& r = rotation;
  return {r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + translation.x,
          r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + translation.y,
          r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + translation.z};
}

Position3 RigidTransform::apply_inverse(const Position3& p) const {
  const Position3 q = p - translation;
  const auto& r = rotation;
  return {r[0][0] * q.x + r[1][0] * q.y + r[2][0] * q.z,
          r[0][1] * q.x + r[1][1] * q.y + r[2][1] * q.z,
          r[0][2] * q.x + r[1][2] * q.y + r[2][2] * q.z};
}

bool RigidTransform::is_orthonormal(double tol) const {
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        s += rotation[i][k] * rotation[j][k];
      }
      if (std::abs(s - (i == j ? 1.0 : 0.0)) > tol) {
        return false;
      }
    }
  }
  return translation.is_finite();
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw ValueError("focal lengths must be positive and finite");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw ValueError("principal point must be finite");
  }
  if (!extrinsic.is_orthonormal()) {
    throw ValueError("extrinsic rotation is not orthonormal");
  }
}

std::string SceneObject::name() const {
  return std::string(to_string(label)) + "[" + std::to_string(instance_id) + "]";
}

std::size_t Scene::human_count() const {
  return static_cast<std::size_t>(std::count_if(objects.begin(), objects.end(), [](const auto& o) {
    return o.label == ClassLabel::HumanChemist;
  }));
}

std::array<double, 2> project(const Position3& robot_point, const CameraIntrinsics& cam) {
  const Position3 c = cam.extrinsic.apply_inverse(robot_point);
  return {cam.fx * c.x / c.z + cam.cx, cam.fy * c.y / c.z + cam.cy};
}

Position3 back_project(const Detection& det, const CameraIntrinsics& cam) {
  if (!det.depth_m || !std::isfinite(*det.depth_m) || *det.depth_m <= 0.0) {
    throw DegenerateDepth("detection " + std::string(to_string(det.label)) + "[" +
                          std::to_string(det.instance_id) + "] has no positive depth");
  }
  cam.validate();
  const double z = *det.depth_m;
  const Position3 camera_point{(det.bbox.center_u() - cam.cx) * z / cam.fx,
                               (det.bbox.center_v() - cam.cy) * z / cam.fy, z};
  return cam.extrinsic.apply(camera_point);
}

Scene ingest_scene(const json& record, const IngestOptions& options) {
  if (!record.is_object()) {
    throw SchemaError("$", "record must be a JSON object");
  }
  Scene scene;
  check_keys(record, kRecordKeys, "", options, scene.warnings);

  const json& id = require(record, "scene_id", "");
  if (!id.is_string()) {
    throw SchemaError("scene_id", "expected a string");
  }
  scene.scene_id = id.get<std::string>();

  if (auto it = record.find("scenario"); it != record.end()) {
    if (!it->is_string()) {
      throw SchemaError("scenario", "expected a string");
    }
    scene.scenario = parse_scenario(it->get<std::string>());
  }
  if (auto it = record.find("goal"); it != record.end() && !it->is_null()) {
    scene.goal = vec3(*it, "goal");
  }
  if (auto it = record.find("image_ref"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) {
      throw SchemaError("image_ref", "expected a string");
    }
    scene.image_ref = it->get<std::string>();
  }
  if (auto it = record.find("truth"); it != record.end() && !it->is_null()) {
    if (!it->is_object()) {
      throw SchemaError("truth", "expected an object");
    }
    const json& o = require(*it, "obstruction", "truth");
    const json& i = require(*it, "interaction", "truth");
    if (!o.is_boolean() || !i.is_boolean()) {
      throw SchemaError("truth", "labels must be booleans");
    }
    TruthLabels truth{o.get<bool>(), i.get<bool>()};
    if (truth.interaction && !truth.obstruction) {
      throw SchemaError("truth", "interaction without obstruction is not a valid class");
    }
    scene.truth = truth;
  }

  std::optional<CameraIntrinsics> cam;
  if (auto it = record.find("intrinsics"); it != record.end() && !it->is_null()) {
    cam = parse_intrinsics(*it, options, scene.warnings);
  }

  const json& objects = require(record, "objects", "");
  if (!objects.is_array()) {
    throw SchemaError("objects", "expected an array");
  }
  std::map<ClassLabel, int> ordinal;
  std::set<std::pair<ClassLabel, int>> seen;
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const std::string where = "objects[" + std::to_string(k) + "]";
    const json& obj = objects[k];
    if (!obj.is_object()) {
      throw SchemaError(where, "expected an object");
    }
    check_keys(obj, kObjectKeys, where, options, scene.warnings);

    const json& label_value = require(obj, "label", where);
    if (!label_value.is_string()) {
      throw SchemaError(where + ".label", "expected a string");
    }
    const ClassLabel label = parse_label(label_value.get<std::string>());

    int instance_id = ordinal[label];
    if (auto it = obj.find("instance_id"); it != obj.end()) {
      if (!it->is_number_integer() || it->get<long long>() < 0) {
        throw SchemaError(where + ".instance_id", "expected a non-negative integer");
      }
      instance_id = it->get<int>();
    }
    ordinal[label] = std::max(ordinal[label], instance_id + 1);

    if (!seen.emplace(label, instance_id).second) {
      throw SchemaError(where, "duplicate object " + std::string(to_string(label)) + "[" +
                                   std::to_string(instance_id) + "]");
    }

    const bool has_position = obj.contains("position");
    const bool has_bbox = obj.contains("bbox");
    if (has_position == has_bbox) {
      throw SchemaError(where, "exactly one of 'position' or 'bbox' is required");
    }

    SceneObject out{label, instance_id, {}};
    if (has_position) {
      out.position = vec3(obj["position"], where + ".position");
    } else {
      const json& bbox = obj["bbox"];
      if (!bbox.is_array() || bbox.size() != 4) {
        throw SchemaError(where + ".bbox", "expected [u0, v0, u1, v1]");
      }
      Detection det;
      det.label = label;
      det.instance_id = instance_id;
      det.bbox = {number(bbox[0], where + ".bbox[0]"), number(bbox[1], where + ".bbox[1]"),
                  number(bbox[2], where + ".bbox[2]"), number(bbox[3], where + ".bbox[3]")};
      if (!(det.bbox.u_min < det.bbox.u_max) || !(det.bbox.v_min < det.bbox.v_max)) {
        throw SchemaError(where + ".bbox", "requires u0 < u1 and v0 < v1");
      }
      if (auto it = obj.find("confidence"); it != obj.end()) {
        det.confidence = number(*it, where + ".confidence");
        if (det.confidence < 0.0 || det.confidence > 1.0) {
          throw SchemaError(where + ".confidence", "must lie in [0, 1]");
        }
      }
      if (!cam) {
        throw SchemaError("intrinsics", "required to localize bbox detections");
      }
      auto depth = obj.find("depth_m");
      if (depth == obj.end() || depth->is_null()) {
        scene.warnings.push_back("excluded " + out.name() + ": missing depth");
        continue;
      }
      det.depth_m = number(*depth, where + ".depth_m");
      out.position = back_project(det, *cam);
    }
    scene.objects.push_back(out);
  }
  return scene;
}

Scene ingest_scene_line(std::string_view line, const IngestOptions& options) {
  json record;
  try {
    record = json::parse(line.begin(), line.end());
  } catch (const json::parse_error& e) {
    throw SchemaError("$", std::string("invalid JSON: ") + e.what());
  }
  return ingest_scene(record, options);
}

json scene_to_json(const Scene& scene) {
  json record;
  record["scene_id"] = scene.scene_id;
  record["scenario"] = std::string(to_string(scene.scenario));
  if (scene.goal) {
    record["goal"] = {scene.goal->x, scene.goal->y, scene.goal->z};
  }
  json objects = json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"label", std::string(to_string(o.label))},
                       {"instance_id", o.instance_id},
                       {"position", {o.position.x, o.position.y, o.position.z}}});
  }
  record["objects"] = std::move(objects);
  if (scene.truth) {
    record["truth"] = {{"obstruction", scene.truth->obstruction},
                       {"interaction", scene.truth->interaction}};
  }
  if (scene.image_ref) {
    record["image_ref"] = *scene.image_ref;
  }
  return record;
}

DistanceReport::DistanceReport(std::vector<std::string> names, std::vector<Position3> positions)
    : names_(std::move(names)), positions_(std::move(positions)) {
  if (names_.size() != positions_.size()) {
    throw std::invalid_argument("names and positions differ in length");
  }
  const std::size_t n = positions_.size();
  entries_.reserve(n * (n - (n > 0 ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      entries_.push_back(distance(positions_[i], positions_[j]));
    }
  }
}

std::size_t DistanceReport::slot(std::size_t i, std::size_t j) const {
  const std::size_t n = names_.size();
  if (i == j || i >= n || j >= n) {
    throw std::out_of_range("no distance entry for (" + std::to_string(i) + ", " +
                            std::to_string(j) + ")");
  }
  if (i > j) {
    std::swap(i, j);
  }
  // Row-major upper triangle without the diagonal.
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

double DistanceReport::at(std::size_t i, std::size_t j) const { return entries_[slot(i, j)]; }

DistanceReport distance_matrix(const Scene& scene) {
  std::vector<std::string> names{"robot"};
  std::vector<Position3> positions{Position3{}};
  for (const auto& o : scene.objects) {
    if (!o.position.is_finite()) {
      throw ValueError("non-finite position for " + o.name());
    }
    names.push_back(o.name());
    positions.push_back(o.position);
  }
  DistanceReport report(std::move(names), std::move(positions));

  for (std::size_t k = 0; k < scene.objects.size(); ++k) {
    const auto& human = scene.objects[k];
    if (human.label != ClassLabel::HumanChemist) {
      continue;
    }
    HumanExtract extract;
    extract.node = k + 1;
    extract.instance_id = human.instance_id;
    extract.human_robot_m = report.at(0, k + 1);
    for (std::size_t m = 0; m < scene.objects.size(); ++m) {
      if (!is_equipment(scene.objects[m].label)) {
        continue;
      }
      const double d = report.at(k + 1, m + 1);
      if (!extract.human_equipment_m || d < *extract.human_equipment_m) {
        extract.human_equipment_m = d;
      }
    }
    report.humans_.push_back(extract);
  }
  return report;
}

}  // namespace labmate
