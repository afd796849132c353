#include "elastovox/mtlfit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>

#include "binary_io.hpp"

namespace elastovox {

void FitConfig::validate() const {
  if (!(lo > 0.0 && lo <= hi)) throw parse_error("fit sampling range must satisfy 0 < lo <= hi");
  if (batch < 1 || monitor_samples < 1 || monitor_every < 1)
    throw parse_error("fit batch and monitor sizes must be positive");
  if (max_iters < 0) throw parse_error("fit max_iters must be non-negative");
  if (!(step > 0.0) || !(decay > 0.0)) throw parse_error("fit step and decay must be positive");
}

Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Quaterniond q;
  do {
    q.coeffs() << normal(rng), normal(rng), normal(rng), normal(rng);
  } while (q.coeffs().norm() < 1.0e-12);
  q.normalize();
  return q.toRotationMatrix();
}

std::vector<StrainSample> sample_strains(const FitConfig& cfg, std::mt19937_64& rng, int count) {
  std::uniform_real_distribution<double> stretch(cfg.lo, cfg.hi);
  std::vector<StrainSample> out(static_cast<std::size_t>(count));
  for (auto& s : out) {
    s.S << stretch(rng), stretch(rng), stretch(rng);
    std::sort(s.S.data(), s.S.data() + 3, std::greater<>());
    s.U = random_rotation(rng);
    s.V = random_rotation(rng);
  }
  return out;
}

Eigen::Matrix3Xd stretches(const std::vector<StrainSample>& samples) {
  Eigen::Matrix3Xd S(3, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) S.col(static_cast<Eigen::Index>(i)) = samples[i].S;
  return S;
}

namespace {

// Draws only the stretches (frames do not enter the loss), consuming the
// stream exactly like sample_strains would.
Eigen::Matrix3Xd draw_stretches(const FitConfig& cfg, std::mt19937_64& rng, int count) {
  return stretches(sample_strains(cfg, rng, count));
}

double loss_impl(const StrainNet& net, const MaterialSpec& material, const Eigen::Matrix3Xd& S,
                 StrainNet::Params* grad) {
  const Lame lame = material.lame();
  const double e = material.e;
  const Eigen::Index B = S.cols();
  const auto raw = net.forward(S);
  Eigen::Matrix<double, 9, Eigen::Dynamic> dN(9, B);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const Eigen::Map<const Matrix3d> N(raw.col(b).data());
    const Vector3d s = S.col(b);
    const Matrix3d M = s.asDiagonal() * (N + N.transpose()) - Matrix3d::Identity();
    const double psi_net = 0.5 * e * M.squaredNorm();
    const double psi = target_energy<double>(material.model, lame, s);
    const double r = std::log1p(psi_net) - std::log1p(psi);
    loss += r * r;
    if (grad) {
      const double coef = 2.0 * r / (static_cast<double>(B) * (1.0 + psi_net));
      const Matrix3d G = coef * e * (s.asDiagonal() * M);
      const Matrix3d dRaw = G + G.transpose();
      dN.col(b) = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(dRaw.data());
    }
  }
  if (grad) *grad = net.backward(S, dN);
  return loss / static_cast<double>(B);
}

constexpr std::uint64_t kMonitorStream = 0x9e3779b97f4a7c15ULL;
constexpr double kRunawayGrowth = 1.0e3;
constexpr std::uint64_t kHeldOutStream = 0xc2b2ae3d27d4eb4fULL;

} // namespace

double fit_loss(const StrainNet& net, const MaterialSpec& material, const Eigen::Matrix3Xd& S) {
  return loss_impl(net, material, S, nullptr);
}

double fit_loss_gradient(const StrainNet& net, const MaterialSpec& material,
                         const Eigen::Matrix3Xd& S, StrainNet::Params& grad) {
  return loss_impl(net, material, S, &grad);
}

Eigen::Matrix3Xd held_out_stretches(const FitConfig& cfg, int count) {
  std::mt19937_64 rng(cfg.seed ^ kHeldOutStream);
  return draw_stretches(cfg, rng, count);
}

FitResult fit(const MaterialSpec& material, const FitConfig& cfg,
              const std::optional<StrainNet>& warm_start) {
  cfg.validate();
  material.validate();

  std::mt19937_64 monitor_rng(cfg.seed ^ kMonitorStream);
  const Eigen::Matrix3Xd monitor = draw_stretches(cfg, monitor_rng, cfg.monitor_samples);
  std::mt19937_64 rng(cfg.seed);

  StrainNet net = warm_start ? *warm_start : StrainNet::initialized(cfg.seed);
  FitResult best;
  best.net = net;
  best.loss = fit_loss(net, material, monitor);
  best.converged = best.loss <= cfg.tol;

  double step = cfg.step;
  StrainNet::Params grad;
  double first_loss = -1.0;
  int it = 0;
  for (; it < cfg.max_iters && !best.converged; ++it) {
    const Eigen::Matrix3Xd S = draw_stretches(cfg, rng, cfg.batch);
    const double loss = fit_loss_gradient(net, material, S, grad);
    if (first_loss < 0.0) first_loss = loss;
    // A saturated network keeps the loss finite, so a runaway is caught by growth.
    const bool runaway = loss > kRunawayGrowth * std::max(first_loss, 1.0e-12);
    if (!std::isfinite(loss) || !grad.allFinite() || runaway) {
      std::ostringstream msg;
      msg << "fit diverged at iteration " << it << " (step size " << step
          << "); reduce the step size";
      throw fit_error(msg.str());
    }
    net.params() -= step * grad;
    step *= cfg.decay;

    if ((it + 1) % cfg.monitor_every == 0 || it + 1 == cfg.max_iters) {
      const double m = fit_loss(net, material, monitor);
      if (!std::isfinite(m)) throw fit_error("fit produced a non-finite monitor loss");
      if (m < best.loss) {
        best.loss = m;
        best.net = net;
      }
      best.converged = best.loss <= cfg.tol;
    }
  }
  best.iterations = it;
  return best;
}

std::vector<int> traversal_order(int ne, int nnu) {
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(ne * nnu));
  for (int inu = 0; inu < nnu; ++inu)
    for (int k = 0; k < ne; ++k) {
      const int ie = (inu % 2 == 0) ? k : ne - 1 - k;
      order.push_back(ie + ne * inu);
    }
  return order;
}

WeightBank build_bank(MaterialModel model, double rho, double e_lo, double e_hi, double nu_lo,
                      double nu_hi, int ne, int nnu, const BankConfig& cfg,
                      const BankProgress& progress) {
  if (ne < 1 || nnu < 1) throw parse_error("bank lattice dimensions must be >= 1");
  if (!(e_lo > 0.0 && e_lo <= e_hi)) throw parse_error("bank e range invalid");
  if (!(nu_lo >= 0.0 && nu_lo <= nu_hi && nu_hi < 0.5)) throw parse_error("bank nu range invalid");
  if (cfg.cold.lo != cfg.warm.lo || cfg.cold.hi != cfg.warm.hi)
    throw parse_error("bank cold and warm fits must share a sampling range");

  WeightBank bank;
  bank.model = model;
  bank.rho = rho;
  bank.ne = ne;
  bank.nnu = nnu;
  bank.e_lo = e_lo;
  bank.e_hi = e_hi;
  bank.nu_lo = nu_lo;
  bank.nu_hi = nu_hi;
  bank.sample_lo = cfg.cold.lo;
  bank.sample_hi = cfg.cold.hi;
  bank.nodes.resize(static_cast<std::size_t>(ne * nnu));

  std::optional<StrainNet> previous;
  for (const int idx : traversal_order(ne, nnu)) {
    const int ie = idx % ne;
    const int inu = idx / ne;
    MaterialSpec mat{model, bank.e_at(ie), bank.nu_at(inu), rho};
    FitResult r;
    try {
      r = fit(mat, previous ? cfg.warm : cfg.cold, previous);
    } catch (const Error& err) {
      std::ostringstream msg;
      msg << "bank node (" << ie << ", " << inu << ") e=" << mat.e << " nu=" << mat.nu << ": "
          << err.what();
      throw fit_error(msg.str());
    }
    if (r.loss > cfg.loss_ceiling) {
      std::ostringstream msg;
      msg << "bank node (" << ie << ", " << inu << ") e=" << mat.e << " nu=" << mat.nu
          << " loss " << r.loss << " exceeds ceiling " << cfg.loss_ceiling;
      throw fit_error(msg.str());
    }
    BankNode& node = bank.nodes[idx];
    node.e = mat.e;
    node.nu = mat.nu;
    node.loss = r.loss;
    node.converged = r.converged;
    node.net = r.net;
    previous = r.net;
    if (progress) progress(idx, node);
  }
  return bank;
}

MaterialNet query(const WeightBank& bank, double e, double nu, const FitConfig& fine_tune) {
  const double tol = 1.0e-12;
  if (e < bank.e_lo * (1.0 - tol) || e > bank.e_hi * (1.0 + tol) || nu < bank.nu_lo - tol ||
      nu > bank.nu_hi + tol) {
    std::ostringstream msg;
    msg << "query (e=" << e << ", nu=" << nu << ") outside bank ranges e in [" << bank.e_lo << ", "
        << bank.e_hi << "], nu in [" << bank.nu_lo << ", " << bank.nu_hi << "]";
    throw parse_error(msg.str());
  }

  auto locate = [](double x, double lo, double hi, int n, int& i0, double& t) {
    if (n == 1 || hi == lo) {
      i0 = 0;
      t = 0.0;
      return;
    }
    double u = std::clamp((x - lo) / (hi - lo), 0.0, 1.0) * (n - 1);
    if (std::abs(u - std::round(u)) < 1.0e-9) u = std::round(u); // exact node hits blend nothing
    i0 = std::min(static_cast<int>(std::floor(u)), n - 2);
    t = u - i0;
  };
  int ie = 0, inu = 0;
  double te = 0.0, tnu = 0.0;
  locate(e, bank.e_lo, bank.e_hi, bank.ne, ie, te);
  locate(nu, bank.nu_lo, bank.nu_hi, bank.nnu, inu, tnu);

  StrainNet::Params blended = StrainNet::Params::Zero(StrainNet::kNumParams);
  for (int de = 0; de < 2; ++de)
    for (int dnu = 0; dnu < 2; ++dnu) {
      const double w = (de ? te : 1.0 - te) * (dnu ? tnu : 1.0 - tnu);
      if (w == 0.0) continue;
      blended += w * bank.node(ie + de, inu + dnu).net.params();
    }

  MaterialNet out;
  out.material = MaterialSpec{bank.model, e, nu, bank.rho};
  FitConfig cfg = fine_tune;
  cfg.lo = bank.sample_lo;
  cfg.hi = bank.sample_hi;
  const FitResult r = fit(out.material, cfg, StrainNet(std::move(blended)));
  out.net = r.net;
  out.fit_loss = r.loss;
  return out;
}

void write_bank(const std::filesystem::path& path, const WeightBank& bank) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write bank file " + path.string());
  using detail::write_pod;
  detail::write_magic(out, "WBNK");
  write_pod<std::uint32_t>(out, 1);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(bank.model));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(bank.ne));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(bank.nnu));
  for (double v : {bank.e_lo, bank.e_hi, bank.nu_lo, bank.nu_hi, bank.rho, bank.sample_lo, bank.sample_hi})
    write_pod<double>(out, v);
  write_pod<std::uint32_t>(out, StrainNet::kIn);
  write_pod<std::uint32_t>(out, StrainNet::kHidden1);
  write_pod<std::uint32_t>(out, StrainNet::kHidden2);
  write_pod<std::uint32_t>(out, StrainNet::kOut);
  write_pod<std::uint32_t>(out, StrainNet::kNumParams);
  for (const auto& n : bank.nodes) {
    write_pod<double>(out, n.e);
    write_pod<double>(out, n.nu);
    write_pod<double>(out, n.loss);
    write_pod<std::uint32_t>(out, n.converged ? 1u : 0u);
    out.write(reinterpret_cast<const char*>(n.net.params().data()),
              static_cast<std::streamsize>(sizeof(double) * StrainNet::kNumParams));
  }
  if (!out) throw io_error("failed writing " + path.string());
}

WeightBank read_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open bank file " + path.string());
  using detail::read_pod;
  const std::string what = "bank " + path.string();
  detail::expect_magic(in, "WBNK", what);
  if (read_pod<std::uint32_t>(in, what) != 1) throw parse_error(what + ": unsupported version");
  WeightBank bank;
  const auto model = read_pod<std::uint32_t>(in, what);
  if (model > 2) throw parse_error(what + ": unknown material tag");
  bank.model = static_cast<MaterialModel>(model);
  bank.ne = static_cast<int>(read_pod<std::uint32_t>(in, what));
  bank.nnu = static_cast<int>(read_pod<std::uint32_t>(in, what));
  if (bank.ne < 1 || bank.nnu < 1 || bank.ne * bank.nnu > 1000000)
    throw parse_error(what + ": bad lattice dimensions");
  bank.e_lo = read_pod<double>(in, what);
  bank.e_hi = read_pod<double>(in, what);
  bank.nu_lo = read_pod<double>(in, what);
  bank.nu_hi = read_pod<double>(in, what);
  bank.rho = read_pod<double>(in, what);
  bank.sample_lo = read_pod<double>(in, what);
  bank.sample_hi = read_pod<double>(in, what);
  const auto in_dim = read_pod<std::uint32_t>(in, what);
  const auto h1 = read_pod<std::uint32_t>(in, what);
  const auto h2 = read_pod<std::uint32_t>(in, what);
  const auto out_dim = read_pod<std::uint32_t>(in, what);
  const auto count = read_pod<std::uint32_t>(in, what);
  if (in_dim != StrainNet::kIn || h1 != StrainNet::kHidden1 || h2 != StrainNet::kHidden2 ||
      out_dim != StrainNet::kOut || count != StrainNet::kNumParams)
    throw parse_error(what + ": architecture mismatch");
  bank.nodes.resize(static_cast<std::size_t>(bank.ne * bank.nnu));
  for (auto& n : bank.nodes) {
    n.e = read_pod<double>(in, what);
    n.nu = read_pod<double>(in, what);
    n.loss = read_pod<double>(in, what);
    n.converged = read_pod<std::uint32_t>(in, what) != 0;
    StrainNet::Params p(StrainNet::kNumParams);
    in.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(sizeof(double) * p.size()));
    if (!in) throw parse_error("truncated " + what);
    n.net = StrainNet(std::move(p));
  }
  return bank;
}

} // namespace elastovox
