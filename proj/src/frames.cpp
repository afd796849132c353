#include "elastovox/frames.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace elastovox {

using json = nlohmann::json;

std::string frame_name(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05d.txt", frame);
  return buf;
}

void write_frame(const std::filesystem::path& path, const Positions& q) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write frame " + path.string());
  char line[128];
  for (Eigen::Index v = 0; v < q.cols(); ++v) {
    std::snprintf(line, sizeof line, "%lld %.17g %.17g %.17g\n", static_cast<long long>(v), q(0, v),
                  q(1, v), q(2, v));
    out << line;
  }
  if (!out) throw io_error("failed writing " + path.string());
}

Positions read_frame(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open frame " + path.string());
  std::vector<Vector3d> cols;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long index;
    Vector3d p;
    if (!(ss >> index >> p.x() >> p.y() >> p.z()) || index != static_cast<long long>(cols.size()))
      throw parse_error(path.string() + ":" + std::to_string(lineno) + ": malformed frame line");
    cols.push_back(p);
  }
  Positions q(3, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t v = 0; v < cols.size(); ++v) q.col(static_cast<Eigen::Index>(v)) = cols[v];
  return q;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  json frames = json::array();
  for (const FrameStats& f : m.frames)
    frames.push_back({{"frame", f.frame},
                      {"outer_iterations", f.outer_iterations},
                      {"inner_iterations", f.inner_iterations},
                      {"inner_per_outer", f.inner_per_outer},
                      {"linear_residual", f.linear_residual},
                      {"step_residual", f.step_residual},
                      {"force_norm", f.force_norm},
                      {"wall_ms", f.wall_ms},
                      {"converged", f.converged}});
  const json doc = {
      {"tag", m.tag},
      {"scene_hash", m.scene_hash},
      {"material",
       {{"model", std::string(to_string(m.material.model))},
        {"e", m.material.e},
        {"nu", m.material.nu},
        {"rho", m.material.rho}}},
      {"fit_loss", m.fit_loss},
      {"grid",
       {{"resolution", {m.resolution.x(), m.resolution.y(), m.resolution.z()}},
        {"spacing", m.spacing},
        {"voxels", m.voxels},
        {"dofs", m.dofs}}},
      {"dt", m.dt},
      {"seed", m.seed},
      {"frames", frames},
      {"files", m.files}};
  std::ofstream out(path);
  if (!out) throw io_error("cannot write manifest " + path.string());
  out << doc.dump(2) << "\n";
  if (!out) throw io_error("failed writing " + path.string());
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open manifest " + path.string());
  RunManifest m;
  try {
    const json doc = json::parse(in);
    m.tag = doc.at("tag").get<std::string>();
    m.scene_hash = doc.at("scene_hash").get<std::string>();
    const json& mat = doc.at("material");
    m.material.model = material_model_from_string(mat.at("model").get<std::string>());
    m.material.e = mat.at("e").get<double>();
    m.material.nu = mat.at("nu").get<double>();
    m.material.rho = mat.at("rho").get<double>();
    m.fit_loss = doc.at("fit_loss").get<double>();
    const json& g = doc.at("grid");
    for (int a = 0; a < 3; ++a) m.resolution(a) = g.at("resolution").at(a).get<int>();
    m.spacing = g.at("spacing").get<double>();
    m.voxels = g.at("voxels").get<int>();
    m.dofs = g.at("dofs").get<int>();
    m.dt = doc.at("dt").get<double>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    for (const json& f : doc.at("frames")) {
      FrameStats s;
      s.frame = f.at("frame").get<int>();
      s.outer_iterations = f.at("outer_iterations").get<int>();
      s.inner_iterations = f.at("inner_iterations").get<int>();
      s.inner_per_outer = f.at("inner_per_outer").get<double>();
      s.linear_residual = f.at("linear_residual").get<double>();
      s.step_residual = f.at("step_residual").get<double>();
      s.force_norm = f.at("force_norm").get<double>();
      s.wall_ms = f.at("wall_ms").get<double>();
      s.converged = f.at("converged").get<bool>();
      m.frames.push_back(s);
    }
    m.files = doc.at("files").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw parse_error(path.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

std::vector<FrameComparison> compare_runs(const std::filesystem::path& a, const std::filesystem::path& b) {
  const RunManifest ma = read_manifest(a / "manifest.json");
  const RunManifest mb = read_manifest(b / "manifest.json");
  if (ma.files.size() != mb.files.size())
    throw parse_error("frame count mismatch: " + std::to_string(ma.files.size()) + " vs " +
                      std::to_string(mb.files.size()));
  if (ma.dofs != mb.dofs) throw parse_error("DoF layout mismatch");

  auto relative_residual = [](const RunManifest& m, int frame) {
    if (frame == 0 || frame > static_cast<int>(m.frames.size())) return 0.0;
    const FrameStats& s = m.frames[static_cast<std::size_t>(frame - 1)];
    return s.force_norm > 0.0 ? s.step_residual / s.force_norm : s.step_residual;
  };

  std::vector<FrameComparison> rows;
  Positions b0;
  for (std::size_t f = 0; f < ma.files.size(); ++f) {
    const Positions qa = read_frame(a / ma.files[f]);
    const Positions qb = read_frame(b / mb.files[f]);
    if (qa.cols() != qb.cols()) throw parse_error("vertex count mismatch in frame " + std::to_string(f));
    if (f == 0) b0 = qb;
    FrameComparison row;
    row.frame = static_cast<int>(f);
    const Eigen::VectorXd dist = (qa - qb).colwise().norm();
    row.rms = qa.cols() > 0 ? std::sqrt(dist.squaredNorm() / static_cast<double>(qa.cols())) : 0.0;
    row.max = qa.cols() > 0 ? dist.maxCoeff() : 0.0;
    const double ref = (qb - b0).norm();
    const double diff = (qa - qb).norm();
    row.relative = ref > 0.0 ? diff / ref : diff;
    row.residual_a = relative_residual(ma, row.frame);
    row.residual_b = relative_residual(mb, row.frame);
    rows.push_back(row);
  }
  return rows;
}

std::string comparison_table(const std::vector<FrameComparison>& rows) {
  std::ostringstream out;
  out << "frame rms max relative residual_a residual_b\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%d %.9e %.9e %.9e %.9e %.9e\n", r.frame, r.rms, r.max, r.relative,
                  r.residual_a, r.residual_b);
    out << line;
  }
  return out.str();
}

} // namespace elastovox
