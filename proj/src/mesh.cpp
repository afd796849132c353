#include "elastovox/mesh.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "elastovox/types.hpp"

namespace elastovox {

Eigen::Vector3d TriangleMesh::bbox_min() const {
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) lo = lo.cwiseMin(v);
  return lo;
}

Eigen::Vector3d TriangleMesh::bbox_max() const {
  Eigen::Vector3d hi = Eigen::Vector3d::Constant(-std::numeric_limits<double>::infinity());
  for (const auto& v : vertices) hi = hi.cwiseMax(v);
  return hi;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open mesh file " + path.string());

  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d p;
      if (!(ls >> p.x() >> p.y() >> p.z()))
        throw parse_error(path.string() + ":" + std::to_string(line_no) + ": malformed vertex");
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int v = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(v > 0 ? v - 1 : static_cast<int>(mesh.vertices.size()) + v);
      }
      if (idx.size() < 3)
        throw parse_error(path.string() + ":" + std::to_string(line_no) + ": face needs 3 indices");
      // Fan-triangulate polygons.
      for (std::size_t t = 1; t + 1 < idx.size(); ++t) mesh.faces.push_back({idx[0], idx[t], idx[t + 1]});
    }
  }
  const int nv = static_cast<int>(mesh.vertices.size());
  for (const auto& f : mesh.faces)
    for (int v : f)
      if (v < 0 || v >= nv) throw parse_error(path.string() + ": face index out of range");
  if (mesh.faces.empty()) throw parse_error(path.string() + ": mesh has no faces");
  return mesh;
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write mesh file " + path.string());
  out << std::setprecision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

std::vector<double> column_crossings(const TriangleMesh& mesh, double x, double y) {
  std::vector<double> zs;
  for (const auto& f : mesh.faces) {
    const Eigen::Vector3d& a = mesh.vertices[f[0]];
    const Eigen::Vector3d& b = mesh.vertices[f[1]];
    const Eigen::Vector3d& c = mesh.vertices[f[2]];
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (det == 0.0) continue; // vertical triangle, parallel to the ray
    const double u = ((x - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (y - a.y())) / det;
    const double v = ((b.x() - a.x()) * (y - a.y()) - (x - a.x()) * (b.y() - a.y())) / det;
    if (u < 0.0 || v < 0.0 || u + v > 1.0) continue;
    zs.push_back(a.z() + u * (b.z() - a.z()) + v * (c.z() - a.z()));
  }
  std::sort(zs.begin(), zs.end());
  return zs;
}

} // namespace elastovox
