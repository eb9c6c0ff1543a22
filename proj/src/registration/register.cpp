#include "lss/registration/register.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lss {

void RegistrationParams::validate() const {
  if (levels < 1) throw InputError("registration: levels must be >= 1");
  if (control_spacing < 4.0) throw InputError("registration: control spacing must be >= 4 voxels");
  if (bending_weight < 0.0) throw InputError("registration: bending weight must be >= 0");
  if (!(step_size > 0.0)) throw InputError("registration: step size must be > 0");
  if (max_iterations < 1) throw InputError("registration: max iterations must be >= 1");
  if (!(smoothing_sigma >= 0.0)) throw InputError("registration: smoothing sigma must be >= 0");
}

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

// 1-D convolution along `axis` (0=z, 1=y, 2=x) with zero padding.
Volume<double> convolve_axis(const Volume<double>& in, const std::vector<double>& k, int axis) {
  const Shape3 s = in.shape();
  const int ext[3] = {s.z, s.y, s.x};
  const std::ptrdiff_t stride[3] = {std::ptrdiff_t(s.y) * s.x, s.x, 1};
  const int r = int(k.size() / 2);
  Volume<double> out(s, in.spacing());
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) {
        const int pos[3] = {z, y, x};
        const std::size_t base = in.index(z, y, x);
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) {
          const int q = pos[axis] + i;
          if (q < 0 || q >= ext[axis]) continue;
          acc += k[i + r] * in[std::size_t(std::ptrdiff_t(base) + i * stride[axis])];
        }
        out[base] = acc;
      }
  return out;
}

Volume<double> to_double(const BinaryMask3D& m) {
  Volume<double> out(m.shape(), m.spacing());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 1.0 : 0.0;
  return out;
}

Vec3 level_spacing(const Shape3& domain, double spacing) {
  // Inactive axes keep a nominal spacing; their single voxel sits on knot 1.
  return {spacing, spacing, spacing};
}

std::array<bool, 3> active_of(const Shape3& s) { return {s.z > 1, s.y > 1, s.x > 1}; }

void zero_inactive(Coefficients& c, const std::array<bool, 3>& active) {
  for (int a = 0; a < 3; ++a)
    if (!active[a]) c.col(a).setZero();
}

struct LevelOutcome {
  bool converged = false;
  int iterations = 0;
  double loss = 0.0;
};

LevelOutcome optimize_level(const RegistrationObjective& obj, BSplineTransform& t, const RegistrationParams& p) {
  const auto active = t.active_axes();
  Coefficients grad;
  double loss = obj.evaluate(t, &grad);
  zero_inactive(grad, active);
  double alpha = p.step_size;
  int small_steps = 0;
  LevelOutcome out;
  for (int it = 0; it < p.max_iterations; ++it) {
    out.iterations = it + 1;
    const double gmax = grad.cwiseAbs().maxCoeff();
    if (gmax == 0.0) {
      out.converged = true;
      break;
    }
    BSplineTransform trial = t;
    trial.coefficients -= (alpha / gmax) * grad;
    Coefficients trial_grad;
    const double trial_loss = obj.evaluate(trial, &trial_grad);
    if (trial_loss < loss) {
      const double rel = (loss - trial_loss) / std::max(loss, 1e-300);
      t = std::move(trial);
      loss = trial_loss;
      grad = std::move(trial_grad);
      zero_inactive(grad, active);
      alpha = std::min(alpha * 1.2, 4.0 * p.step_size);
      small_steps = rel < p.tolerance ? small_steps + 1 : 0;
      if (small_steps >= 3) {
        out.converged = true;
        break;
      }
    } else {
      alpha *= 0.5;
      if (alpha < 1e-3 * p.step_size) {
        out.converged = true;
        break;
      }
    }
  }
  out.loss = loss;
  return out;
}

}  // namespace

Volume<double> gaussian_smooth(const Volume<double>& in, double sigma) {
  if (sigma <= 0.0) return in;
  const auto k = gaussian_kernel(sigma);
  Volume<double> out = in;
  const Shape3 s = in.shape();
  const int ext[3] = {s.z, s.y, s.x};
  for (int a = 0; a < 3; ++a)
    if (ext[a] > 1) out = convolve_axis(out, k, a);
  return out;
}

Volume<double> downsample(const Volume<double>& in) {
  const Volume<double> smooth = gaussian_smooth(in, 1.0);
  const Shape3 s = in.shape();
  auto half = [](int n) { return n > 1 ? (n + 1) / 2 : 1; };
  const Shape3 d{half(s.z), half(s.y), half(s.x)};
  const int fz = s.z > 1 ? 2 : 1, fy = s.y > 1 ? 2 : 1, fx = s.x > 1 ? 2 : 1;
  Volume<double> out(d, in.spacing());
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) out(z, y, x) = smooth(z * fz, y * fy, x * fx);
  return out;
}

BSplineTransform refine(const BSplineTransform& coarse, const Shape3& fine_domain) {
  const auto active = active_of(coarse.domain);
  BSplineTransform cur = coarse;
  // One axis at a time; each pass halves the knot spacing along that axis.
  for (int a = 0; a < 3; ++a) {
    if (!active[a]) continue;
    const int ext[3] = {fine_domain.z, fine_domain.y, fine_domain.x};
    BSplineTransform next;
    next.domain = cur.domain;
    next.spacing = cur.spacing;
    next.grid = cur.grid;
    const int n_fine = control_count(ext[a], cur.spacing[a]);
    if (a == 0) next.grid.z = n_fine, next.domain.z = fine_domain.z;
    if (a == 1) next.grid.y = n_fine, next.domain.y = fine_domain.y;
    if (a == 2) next.grid.x = n_fine, next.domain.x = fine_domain.x;
    next.coefficients = Coefficients::Zero(Eigen::Index(next.grid.count()), 3);
    const int n_coarse = a == 0 ? cur.grid.z : a == 1 ? cur.grid.y : cur.grid.x;
    auto coarse_row = [&](int iz, int iy, int ix, int j) -> Eigen::RowVector3d {
      j = std::clamp(j, 0, n_coarse - 1);
      int idx[3] = {iz, iy, ix};
      idx[a] = j;
      return cur.coefficients.row(Eigen::Index(cur.control_index(idx[0], idx[1], idx[2])));
    };
    for (int iz = 0; iz < next.grid.z; ++iz)
      for (int iy = 0; iy < next.grid.y; ++iy)
        for (int ix = 0; ix < next.grid.x; ++ix) {
          const int k = a == 0 ? iz : a == 1 ? iy : ix;
          Eigen::RowVector3d v;
          if ((k - 1) % 2 == 0 && k >= 1) {
            const int j = (k - 1) / 2 + 1;
            v = (coarse_row(iz, iy, ix, j - 1) + 6.0 * coarse_row(iz, iy, ix, j) + coarse_row(iz, iy, ix, j + 1)) / 8.0;
          } else {
            // k - 1 odd (or k == 0, i.e. position -s: midpoint of coarse knots 0 and 1 shifted by one half).
            const int j = k / 2;
            v = k == 0 ? (coarse_row(iz, iy, ix, 0) + coarse_row(iz, iy, ix, 1)) / 2.0
                       : (coarse_row(iz, iy, ix, j) + coarse_row(iz, iy, ix, j + 1)) / 2.0;
          }
          v[a] *= 2.0;
          next.coefficients.row(Eigen::Index(next.control_index(iz, iy, ix))) = v;
        }
    cur = std::move(next);
  }
  cur.domain = fine_domain;
  return cur;
}

RegistrationObjective::RegistrationObjective(Volume<double> moving, Volume<double> fixed, double bending_weight)
    : moving_(std::move(moving)), fixed_(std::move(fixed)), bending_weight_(bending_weight) {
  if (!(moving_.shape() == fixed_.shape())) throw InputError("registration: moving and fixed shapes differ");
}

double RegistrationObjective::evaluate(const BSplineTransform& t, Coefficients* grad) const {
  if (!(t.domain == fixed_.shape())) throw InputError("registration: transform domain differs from image shape");
  const DisplacementField u = dense_field(t);
  const Shape3 s = fixed_.shape();
  const double inv_n = 1.0 / double(s.count());
  DisplacementField w(s, {}, Vec3::Zero());
  double sse = 0.0;
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) {
        Vec3 g;
        const double r = sample_linear(moving_, Vec3(z, y, x) + u(z, y, x), grad ? &g : nullptr) - fixed_(z, y, x);
        sse += r * r;
        if (grad) w(z, y, x) = (2.0 * inv_n * r) * g;
      }
  double loss = sse * inv_n;
  if (bending_weight_ > 0.0) {
    Coefficients be_grad;
    loss += bending_weight_ * bending_energy(t, grad ? &be_grad : nullptr);
    if (grad) *grad = accumulate_to_grid(t, w) + bending_weight_ * be_grad;
  } else if (grad) {
    *grad = accumulate_to_grid(t, w);
  }
  if (grad) zero_inactive(*grad, t.active_axes());
  return loss;
}

RegistrationResult register_masks(const BinaryMask3D& moving, const BinaryMask3D& fixed,
                                  const RegistrationParams& params) {
  params.validate();
  if (!(moving.shape() == fixed.shape()))
    throw InputError("register_masks: mask shapes differ (" + to_string(moving.shape()) + " vs " +
                     to_string(fixed.shape()) + ")");
  auto nonempty = [](const BinaryMask3D& m) {
    return std::any_of(m.voxels().begin(), m.voxels().end(), [](std::uint8_t v) { return v != 0; });
  };
  if (!nonempty(moving) || !nonempty(fixed)) throw InputError("register_masks: empty mask");

  std::vector<Volume<double>> mov{to_double(moving)}, fix{to_double(fixed)};
  for (int l = 1; l < params.levels; ++l) {
    mov.push_back(downsample(mov.back()));
    fix.push_back(downsample(fix.back()));
  }

  RegistrationResult result;
  BSplineTransform t;
  for (int l = params.levels - 1; l >= 0; --l) {
    const Shape3 domain = mov[l].shape();
    t = l == params.levels - 1 ? BSplineTransform::identity(domain, level_spacing(domain, params.control_spacing))
                               : refine(t, domain);
    RegistrationObjective obj(gaussian_smooth(mov[l], params.smoothing_sigma),
                              gaussian_smooth(fix[l], params.smoothing_sigma), params.bending_weight);
    if (l == 0)
      result.initial_loss = obj.evaluate(BSplineTransform::identity(domain, t.spacing));
    const LevelOutcome o = optimize_level(obj, t, params);
    result.iterations += o.iterations;
    result.converged = result.converged && o.converged;
    result.final_loss = o.loss;
  }
  result.transform = std::move(t);
  if (!result.converged)
    result.warning = "registration did not converge within " + std::to_string(params.max_iterations) +
                     " iterations per level; returning best transform (loss " + std::to_string(result.final_loss) + ")";
  return result;
}

}  // namespace lss
