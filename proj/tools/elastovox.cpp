// Command-line driver: weight banks, generation runs, oracle runs and comparisons.
//
// Exit codes: 0 success, 1 usage, 2 parse, 3 fit, 4 solve, 5 IO, 6 internal.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "elastovox/defgrad.hpp"
#include "elastovox/frames.hpp"
#include "elastovox/grid.hpp"
#include "elastovox/material.hpp"
#include "elastovox/mtlfit.hpp"
#include "elastovox/oracle.hpp"
#include "elastovox/scene.hpp"
#include "elastovox/solver.hpp"

namespace fs = std::filesystem;
using namespace elastovox;

namespace {

int exit_code(Error::Kind kind) {
  switch (kind) {
  case Error::Kind::Parse: return 2;
  case Error::Kind::Fit: return 3;
  case Error::Kind::Solve: return 4;
  case Error::Kind::IO: return 5;
  case Error::Kind::Internal: return 6;
  }
  return 6;
}

int thread_count() {
  if (const char* env = std::getenv("ELASTOVOX_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<int>(n);
    throw parse_error("ELASTOVOX_THREADS must be a positive integer");
  }
  return 1;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw io_error("cannot create output directory " + dir.string() + ": " + ec.message());
}

RunManifest base_manifest(const SceneFile& scene, const SimGrid& grid, std::uint64_t seed) {
  RunManifest m;
  m.scene_hash = hex64(scene.hash);
  m.material = scene.spec.material;
  m.resolution = grid.resolution;
  m.spacing = grid.spacing;
  m.voxels = grid.num_voxels();
  m.dofs = active_dof_count(grid);
  m.dt = scene.spec.dt;
  m.seed = seed;
  return m;
}

void export_surface(const SceneFile& scene, const SimGrid& grid, const Positions& q,
                    const fs::path& out, int frame) {
  const auto* mesh = std::get_if<MeshShape>(&scene.spec.shape);
  if (!mesh) return;
  char name[32];
  std::snprintf(name, sizeof name, "surface_%05d.obj", frame);
  write_obj(out / name, deform_mesh(grid, q, mesh->mesh));
}

struct FitOptions {
  int iters = 20000;
  int warm_iters = 400;
  double lo = 0.4;
  double hi = 2.2;
  double step = 0.3;
  int batch = 256;
};

void add_fit_options(CLI::App* cmd, FitOptions& o) {
  cmd->add_option("--iters", o.iters, "Gradient steps for the first (cold) node")->capture_default_str();
  cmd->add_option("--warm-iters", o.warm_iters, "Gradient steps for warm-started nodes")->capture_default_str();
  cmd->add_option("--sample-lo", o.lo, "Lower stretch bound of the fitting samples")->capture_default_str();
  cmd->add_option("--sample-hi", o.hi, "Upper stretch bound of the fitting samples")->capture_default_str();
  cmd->add_option("--step", o.step, "Initial step size")->capture_default_str();
  cmd->add_option("--batch", o.batch, "Samples per gradient step")->capture_default_str();
}

FitConfig fit_config(const FitOptions& o, int iters, std::uint64_t seed) {
  FitConfig cfg;
  cfg.max_iters = iters;
  cfg.lo = o.lo;
  cfg.hi = o.hi;
  cfg.step = o.step;
  cfg.batch = o.batch;
  cfg.seed = seed;
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voxel elastodynamics with a fitted strain-correction network"};
  app.require_subcommand(1);

  std::uint64_t seed = 1;
  fs::path out;

  // fit-bank
  auto* fit_bank = app.add_subcommand("fit-bank", "Fit a bank of networks over an (e, nu) lattice");
  std::string model_name = "neohookean";
  std::vector<double> e_range{1.0e6, 1.0e6}, nu_range{0.32, 0.32};
  int ne = 1, nnu = 1;
  double rho = 1000.0, ceiling = std::numeric_limits<double>::infinity();
  FitOptions fit_opts;
  fit_bank->add_option("--model", model_name, "corotational | neohookean | stvk")->capture_default_str();
  fit_bank->add_option("--e-range", e_range, "Young's modulus range (Pa)")->expected(2);
  fit_bank->add_option("--nu-range", nu_range, "Poisson ratio range")->expected(2);
  fit_bank->add_option("--ne", ne, "Lattice points along e")->capture_default_str();
  fit_bank->add_option("--nnu", nnu, "Lattice points along nu")->capture_default_str();
  fit_bank->add_option("--rho", rho, "Density (kg/m^3)")->capture_default_str();
  fit_bank->add_option("--loss-ceiling", ceiling, "Fail if any node loss exceeds this");
  add_fit_options(fit_bank, fit_opts);
  fit_bank->add_option("--seed", seed, "RNG seed")->capture_default_str();
  fit_bank->add_option("--out", out, "Bank file to write")->required();

  // query-weights
  auto* query_cmd = app.add_subcommand("query-weights", "Interpolate and fine-tune a network from a bank");
  fs::path bank_path;
  double q_e = 0.0, q_nu = 0.0;
  int fine_tune = 200;
  query_cmd->add_option("--bank", bank_path, "Bank file")->required();
  query_cmd->add_option("--e", q_e, "Young's modulus (Pa)")->required();
  query_cmd->add_option("--nu", q_nu, "Poisson ratio")->required();
  query_cmd->add_option("--fine-tune", fine_tune, "Fine-tuning gradient steps")->capture_default_str();
  query_cmd->add_option("--seed", seed, "RNG seed")->capture_default_str();
  query_cmd->add_option("--out", out, "Network file to write")->required();

  // generate
  auto* generate = app.add_subcommand("generate", "Simulate a scene with a fitted network");
  fs::path scene_path, weights_path;
  bool surfaces = false;
  generate->add_option("--scene", scene_path, "Scene file")->required();
  auto* bank_opt = generate->add_option("--bank", bank_path, "Bank to query at the scene material");
  auto* weights_opt = generate->add_option("--weights", weights_path, "Network file to use directly");
  bank_opt->excludes(weights_opt);
  generate->add_option("--fine-tune", fine_tune, "Fine-tuning steps after a bank query")->capture_default_str();
  generate->add_flag("--surface", surfaces, "Also write deformed surface meshes for mesh scenes");
  generate->add_option("--seed", seed, "RNG seed for fine-tuning")->capture_default_str();
  generate->add_option("--out", out, "Output directory")->required();

  // oracle
  auto* oracle = app.add_subcommand("oracle", "Simulate a scene with the Newton FEM reference");
  OracleConfig ocfg;
  oracle->add_option("--scene", scene_path, "Scene file")->required();
  oracle->add_option("--tol", ocfg.tol, "Gradient tolerance relative to e*spacing^2")->capture_default_str();
  oracle->add_option("--seed", seed, "Unused; accepted for a uniform interface")->capture_default_str();
  oracle->add_option("--out", out, "Output directory")->required();

  // compare
  auto* compare = app.add_subcommand("compare", "Per-frame errors between two run directories");
  fs::path run_a, run_b;
  compare->add_option("run_a", run_a, "Run directory A")->required();
  compare->add_option("run_b", run_b, "Run directory B (reference)")->required();
  compare->add_option("--seed", seed, "Unused; accepted for a uniform interface")->capture_default_str();
  compare->add_option("--out", out, "Write the table here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (*fit_bank) {
      BankConfig cfg;
      cfg.cold = fit_config(fit_opts, fit_opts.iters, seed);
      cfg.warm = fit_config(fit_opts, fit_opts.warm_iters, seed);
      cfg.loss_ceiling = ceiling;
      const MaterialModel model = material_model_from_string(model_name);
      const WeightBank bank =
          build_bank(model, rho, e_range[0], e_range[1], nu_range[0], nu_range[1], ne, nnu, cfg,
                     [&](int idx, const BankNode& node) {
                       std::cout << "node " << idx % ne << " " << idx / ne << " e=" << node.e
                                 << " nu=" << node.nu << " loss=" << node.loss
                                 << (node.converged ? "" : " (not converged)") << std::endl;
                     });
      write_bank(out, bank);
      return 0;
    }

    if (*query_cmd) {
      const WeightBank bank = read_bank(bank_path);
      FitConfig cfg;
      cfg.max_iters = fine_tune;
      cfg.seed = seed;
      const MaterialNet mnet = query(bank, q_e, q_nu, cfg);
      write_strain_net(out, mnet);
      std::cout << "loss=" << mnet.fit_loss << std::endl;
      return 0;
    }

    if (*generate) {
      const SceneFile scene = load_scene(scene_path);
      MaterialNet mnet;
      if (!weights_path.empty()) {
        mnet = read_strain_net(weights_path);
        const auto& m = scene.spec.material;
        if (mnet.material.model != m.model || mnet.material.e != m.e || mnet.material.nu != m.nu)
          std::cerr << "warning: network was fit for " << to_string(mnet.material.model)
                    << " e=" << mnet.material.e << " nu=" << mnet.material.nu
                    << ", scene asks for " << to_string(m.model) << " e=" << m.e << " nu=" << m.nu
                    << "\n";
        mnet.material = m;
      } else if (!bank_path.empty()) {
        const WeightBank bank = read_bank(bank_path);
        if (bank.model != scene.spec.material.model)
          throw parse_error("bank material family does not match the scene");
        FitConfig cfg;
        cfg.max_iters = fine_tune;
        cfg.seed = seed;
        mnet = query(bank, scene.spec.material.e, scene.spec.material.nu, cfg);
        mnet.material.rho = scene.spec.material.rho;
      } else {
        throw parse_error("generate needs --bank or --weights");
      }

      const SimGrid grid = rasterize(scene.spec);
      const DefGradKernel kernel = build_kernel(grid, scene.spec.hourglass);
      SolverOptions opts = scene.solver;
      opts.threads = thread_count();
      const SolverContext ctx(grid, kernel, mnet, external_forces(scene.spec, grid), scene.spec.dt,
                              scene.spec.damping, opts);

      ensure_dir(out);
      RunManifest manifest = base_manifest(scene, grid, seed);
      manifest.fit_loss = mnet.fit_loss;
      SolverState state = SolverState::at_rest(grid);
      write_frame(out / frame_name(0), state.q);
      manifest.files.push_back(frame_name(0));
      if (surfaces) export_surface(scene, grid, state.q, out, 0);

      for (int f = 1; f <= scene.spec.frames; ++f) {
        const Positions q_n = state.q;
        const Positions v_n = state.q_dot / (1.0 + ctx.damping * ctx.h);
        const auto t0 = std::chrono::steady_clock::now();
        try {
          step(state, ctx);
        } catch (const Error& e) {
          throw Error(e.kind(), "frame " + std::to_string(f) + ": " + e.what());
        }
        const auto t1 = std::chrono::steady_clock::now();
        const auto& d = state.diagnostics;
        FrameStats s;
        s.frame = f;
        s.outer_iterations = d.outer_iterations;
        s.inner_iterations = d.inner_iterations;
        s.inner_per_outer = d.outer_iterations > 0 ? double(d.inner_iterations) / d.outer_iterations : 0.0;
        s.linear_residual = d.linear_residual;
        s.force_norm = d.force_norm;
        s.step_residual = step_residual(ctx, q_n, v_n, state.q).norm();
        s.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        s.converged = d.converged;
        manifest.frames.push_back(s);
        write_frame(out / frame_name(f), state.q);
        manifest.files.push_back(frame_name(f));
        if (surfaces) export_surface(scene, grid, state.q, out, f);
      }
      write_manifest(out / "manifest.json", manifest);
      return 0;
    }

    if (*oracle) {
      const SceneFile scene = load_scene(scene_path);
      const SimGrid grid = rasterize(scene.spec);
      const DefGradKernel kernel = build_kernel(grid, scene.spec.hourglass);
      const Positions f_ext = external_forces(scene.spec, grid);
      double free_force_norm = 0.0;
      for (int v = 0; v < grid.num_vertices(); ++v)
        if (!grid.fixed[v]) free_force_norm += f_ext.col(v).squaredNorm();
      free_force_norm = std::sqrt(free_force_norm);

      ensure_dir(out);
      RunManifest manifest = base_manifest(scene, grid, seed);
      manifest.tag = "oracle";
      Positions q = grid.rest_positions;
      Positions v = Positions::Zero(3, grid.num_vertices());
      write_frame(out / frame_name(0), q);
      manifest.files.push_back(frame_name(0));
      for (int f = 1; f <= scene.spec.frames; ++f) {
        const auto t0 = std::chrono::steady_clock::now();
        NewtonReport r;
        try {
          r = newton_step(q, v, grid, kernel, scene.spec.material, scene.spec.dt, f_ext, ocfg,
                          scene.spec.damping);
        } catch (const Error& e) {
          throw Error(e.kind(), "frame " + std::to_string(f) + ": " + e.what());
        }
        const auto t1 = std::chrono::steady_clock::now();
        FrameStats s;
        s.frame = f;
        s.outer_iterations = r.iterations;
        s.step_residual = r.gradient_norm;
        s.force_norm = free_force_norm;
        s.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        s.converged = true;
        manifest.frames.push_back(s);
        write_frame(out / frame_name(f), q);
        manifest.files.push_back(frame_name(f));
      }
      write_manifest(out / "manifest.json", manifest);
      return 0;
    }

    if (*compare) {
      const std::string table = comparison_table(compare_runs(run_a, run_b));
      if (out.empty()) {
        std::cout << table;
      } else {
        std::ofstream f(out);
        if (!f) throw io_error("cannot write " + out.string());
        f << table;
      }
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 6;
  }
  return 0;
}
