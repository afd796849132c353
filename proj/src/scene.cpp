#include "elastovox/scene.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"

namespace elastovox {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw parse_error("scene field '" + where + "': " + what);
}

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) fail(where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) ok = ok || it.key() == key;
    if (!ok) fail(where + "." + it.key(), "unknown field");
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) fail(where + "." + key, "missing required field");
  return obj.at(key);
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) fail(where, "expected an integer");
  return v.get<int>();
}

Vector3d vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) fail(where, "expected an array of 3 numbers");
  Vector3d out;
  for (int a = 0; a < 3; ++a) out(a) = number(v[a], where + "[" + std::to_string(a) + "]");
  return out;
}

Eigen::Vector3i ivec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) fail(where, "expected an array of 3 integers");
  Eigen::Vector3i out;
  for (int a = 0; a < 3; ++a) out(a) = integer(v[a], where + "[" + std::to_string(a) + "]");
  return out;
}

AlignedBox box(const json& v, const std::string& where) {
  check_keys(v, where, {"min", "max"});
  AlignedBox b{vec3(require(v, "min", where), where + ".min"), vec3(require(v, "max", where), where + ".max")};
  if ((b.min.array() > b.max.array()).any()) fail(where, "min exceeds max");
  return b;
}

Shape shape(const json& v, const std::filesystem::path& base_dir) {
  const std::string where = "shape";
  if (!v.is_object()) fail(where, "expected an object");
  const json& type = require(v, "type", where);
  if (!type.is_string()) fail(where + ".type", "expected a string");
  const std::string t = type.get<std::string>();
  if (t == "box") {
    check_keys(v, where, {"type", "min", "max"});
    const AlignedBox b = box(json{{"min", require(v, "min", where)}, {"max", require(v, "max", where)}}, where);
    return BoxShape{b.min, b.max};
  }
  if (t == "sphere") {
    check_keys(v, where, {"type", "center", "radius"});
    SphereShape s{vec3(require(v, "center", where), where + ".center"),
                  number(require(v, "radius", where), where + ".radius")};
    if (!(s.radius > 0.0)) fail(where + ".radius", "must be positive");
    return s;
  }
  if (t == "mesh") {
    check_keys(v, where, {"type", "path"});
    const json& p = require(v, "path", where);
    if (!p.is_string()) fail(where + ".path", "expected a string");
    std::filesystem::path path = p.get<std::string>();
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return MeshShape{path, read_obj(path)};
  }
  if (t == "voxels") {
    check_keys(v, where, {"type", "cells"});
    const json& cells = require(v, "cells", where);
    if (!cells.is_array()) fail(where + ".cells", "expected an array");
    VoxelListShape out;
    for (std::size_t i = 0; i < cells.size(); ++i)
      out.cells.push_back(ivec3(cells[i], where + ".cells[" + std::to_string(i) + "]"));
    return out;
  }
  fail(where + ".type", "unknown shape type '" + t + "'");
}

} // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

SceneFile parse_scene(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw parse_error(std::string("scene is not valid JSON: ") + e.what());
  }
  check_keys(doc, "scene",
             {"shape", "resolution", "spacing", "origin", "material", "fixed", "gravity", "forces",
              "torques", "dt", "frames", "damping", "hourglass", "solver"});

  SceneFile out;
  SceneSpec& s = out.spec;
  s.shape = shape(require(doc, "shape", "scene"), base_dir);
  s.resolution = ivec3(require(doc, "resolution", "scene"), "resolution");
  if (doc.contains("spacing")) s.spacing = number(doc["spacing"], "spacing");
  if (doc.contains("origin")) s.origin = vec3(doc["origin"], "origin");

  if (doc.contains("material")) {
    const json& m = doc["material"];
    check_keys(m, "material", {"model", "e", "nu", "rho"});
    if (m.contains("model")) {
      if (!m["model"].is_string()) fail("material.model", "expected a string");
      s.material.model = material_model_from_string(m["model"].get<std::string>());
    }
    if (m.contains("e")) s.material.e = number(m["e"], "material.e");
    if (m.contains("nu")) s.material.nu = number(m["nu"], "material.nu");
    if (m.contains("rho")) s.material.rho = number(m["rho"], "material.rho");
  }

  if (doc.contains("fixed")) {
    if (!doc["fixed"].is_array()) fail("fixed", "expected an array");
    for (std::size_t i = 0; i < doc["fixed"].size(); ++i)
      s.fixed_regions.push_back(box(doc["fixed"][i], "fixed[" + std::to_string(i) + "]"));
  }
  if (doc.contains("gravity")) s.gravity = vec3(doc["gravity"], "gravity");
  if (doc.contains("forces")) {
    if (!doc["forces"].is_array()) fail("forces", "expected an array");
    for (std::size_t i = 0; i < doc["forces"].size(); ++i) {
      const std::string where = "forces[" + std::to_string(i) + "]";
      const json& f = doc["forces"][i];
      check_keys(f, where, {"region", "force"});
      s.forces.push_back({box(require(f, "region", where), where + ".region"),
                          vec3(require(f, "force", where), where + ".force")});
    }
  }
  if (doc.contains("torques")) {
    if (!doc["torques"].is_array()) fail("torques", "expected an array");
    for (std::size_t i = 0; i < doc["torques"].size(); ++i) {
      const std::string where = "torques[" + std::to_string(i) + "]";
      const json& t = doc["torques"][i];
      check_keys(t, where, {"region", "center", "axis", "magnitude"});
      RegionTorque rt;
      rt.region = box(require(t, "region", where), where + ".region");
      rt.center = vec3(require(t, "center", where), where + ".center");
      rt.axis = vec3(require(t, "axis", where), where + ".axis");
      if (!(rt.axis.norm() > 0.0)) fail(where + ".axis", "must be non-zero");
      rt.axis.normalize();
      rt.magnitude = number(require(t, "magnitude", where), where + ".magnitude");
      s.torques.push_back(rt);
    }
  }
  if (doc.contains("dt")) s.dt = number(doc["dt"], "dt");
  if (doc.contains("frames")) s.frames = integer(doc["frames"], "frames");
  if (doc.contains("damping")) s.damping = number(doc["damping"], "damping");
  if (doc.contains("hourglass")) s.hourglass = number(doc["hourglass"], "hourglass");

  if (doc.contains("solver")) {
    const json& o = doc["solver"];
    check_keys(o, "solver", {"max_outer", "max_inner", "tol_outer", "tol_inner", "latent", "inner"});
    SolverOptions& so = out.solver;
    if (o.contains("max_outer")) so.max_outer = integer(o["max_outer"], "solver.max_outer");
    if (o.contains("max_inner")) so.max_inner = integer(o["max_inner"], "solver.max_inner");
    if (o.contains("tol_outer")) so.tol_outer = number(o["tol_outer"], "solver.tol_outer");
    if (o.contains("tol_inner")) so.tol_inner = number(o["tol_inner"], "solver.tol_inner");
    if (o.contains("latent")) so.latent = integer(o["latent"], "solver.latent");
    if (o.contains("inner")) {
      const std::string m = o["inner"].is_string() ? o["inner"].get<std::string>() : "";
      if (m == "jacobi")
        so.inner = InnerMethod::Jacobi;
      else if (m == "direct")
        so.inner = InnerMethod::Direct;
      else
        fail("solver.inner", "expected \"jacobi\" or \"direct\"");
    }
    if (so.max_outer < 1 || so.max_inner < 1) fail("solver", "iteration budgets must be >= 1");
    if (so.latent < 0) fail("solver.latent", "must be non-negative");
  }

  try {
    s.validate();
  } catch (const Error& e) {
    throw parse_error(std::string("scene: ") + e.what());
  }
  out.canonical = doc.dump();
  out.hash = fnv1a64(out.canonical);
  return out;
}

SceneFile load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open scene file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scene(ss.str(), path.parent_path());
  } catch (const Error& e) {
    if (e.kind() == Error::Kind::Parse) throw parse_error(path.string() + ": " + e.what());
    throw;
  }
}

} // namespace elastovox
