#include "lss/registration/bspline.hpp"

#include <algorithm>
#include <cmath>

namespace lss {

namespace {

struct AxisSampling {
  std::vector<int> first;
  std::vector<std::array<double, 4>> weights;
};

AxisSampling sample_axis(int extent, double spacing) {
  AxisSampling s;
  s.first.resize(extent);
  s.weights.resize(extent);
  for (int p = 0; p < extent; ++p) {
    const double t = p / spacing;
    const double i = std::floor(t);
    s.first[p] = int(i);
    s.weights[p] = bspline_basis(t - i);
  }
  return s;
}

// Voxel strides for interleaved 3-component buffers.
inline std::size_t at3(std::size_t a, std::size_t b, std::size_t c, std::size_t nb, std::size_t nc) {
  return ((a * nb + b) * nc + c) * 3;
}

}  // namespace

int control_count(int domain_extent, double spacing) {
  return int(std::floor((domain_extent - 1) / spacing)) + 4;
}

BSplineTransform BSplineTransform::identity(const Shape3& domain, const Vec3& spacing) {
  if (!(spacing.minCoeff() > 0)) throw InputError("bspline: control spacing must be > 0");
  BSplineTransform t;
  t.domain = domain;
  t.spacing = spacing;
  t.grid = {control_count(domain.z, spacing[0]), control_count(domain.y, spacing[1]),
            control_count(domain.x, spacing[2])};
  t.coefficients = Coefficients::Zero(Eigen::Index(t.grid.count()), 3);
  return t;
}

std::array<double, 4> bspline_basis(double u) {
  const double v = 1.0 - u;
  return {v * v * v / 6.0, (3 * u * u * u - 6 * u * u + 4) / 6.0,
          (-3 * u * u * u + 3 * u * u + 3 * u + 1) / 6.0, u * u * u / 6.0};
}

std::array<double, 4> bspline_basis_derivative(double u) {
  const double v = 1.0 - u;
  return {-0.5 * v * v, 1.5 * u * u - 2 * u, -1.5 * u * u + u + 0.5, 0.5 * u * u};
}

Vec3 displacement_at(const BSplineTransform& t, const Vec3& point) {
  const double ext[3] = {double(t.domain.z - 1), double(t.domain.y - 1), double(t.domain.x - 1)};
  int first[3];
  std::array<double, 4> w[3];
  for (int a = 0; a < 3; ++a) {
    if (!(point[a] >= 0.0 && point[a] <= ext[a])) throw InputError("displacement_at: point outside domain");
    const double s = point[a] / t.spacing[a];
    first[a] = int(std::floor(s));
    w[a] = bspline_basis(s - first[a]);
  }
  Vec3 u = Vec3::Zero();
  for (int l = 0; l < 4; ++l)
    for (int m = 0; m < 4; ++m)
      for (int n = 0; n < 4; ++n) {
        const double b = w[0][l] * w[1][m] * w[2][n];
        u += b * t.coefficients.row(Eigen::Index(t.control_index(first[0] + l, first[1] + m, first[2] + n)))
                     .transpose();
      }
  return u;
}

DisplacementField dense_field(const BSplineTransform& t) {
  const Shape3 d = t.domain, g = t.grid;
  const auto sz = sample_axis(d.z, t.spacing[0]);
  const auto sy = sample_axis(d.y, t.spacing[1]);
  const auto sx = sample_axis(d.x, t.spacing[2]);
  const double* c = t.coefficients.data();

  std::vector<double> t1(std::size_t(g.z) * g.y * d.x * 3, 0.0);
  for (int iz = 0; iz < g.z; ++iz)
    for (int iy = 0; iy < g.y; ++iy)
      for (int x = 0; x < d.x; ++x) {
        double* o = &t1[at3(iz, iy, x, g.y, d.x)];
        for (int l = 0; l < 4; ++l) {
          const double w = sx.weights[x][l];
          const double* src = c + t.control_index(iz, iy, sx.first[x] + l) * 3;
          o[0] += w * src[0], o[1] += w * src[1], o[2] += w * src[2];
        }
      }
  std::vector<double> t2(std::size_t(g.z) * d.y * d.x * 3, 0.0);
  for (int iz = 0; iz < g.z; ++iz)
    for (int y = 0; y < d.y; ++y)
      for (int m = 0; m < 4; ++m) {
        const double w = sy.weights[y][m];
        const double* src = &t1[at3(iz, sy.first[y] + m, 0, g.y, d.x)];
        double* o = &t2[at3(iz, y, 0, d.y, d.x)];
        for (int i = 0; i < d.x * 3; ++i) o[i] += w * src[i];
      }
  DisplacementField f(d, {}, Vec3::Zero());
  for (int z = 0; z < d.z; ++z)
    for (int n = 0; n < 4; ++n) {
      const double w = sz.weights[z][n];
      const double* src = &t2[at3(sz.first[z] + n, 0, 0, d.y, d.x)];
      Vec3* o = &f(z, 0, 0);
      for (int i = 0; i < d.y * d.x; ++i) {
        o[i][0] += w * src[3 * i];
        o[i][1] += w * src[3 * i + 1];
        o[i][2] += w * src[3 * i + 2];
      }
    }
  return f;
}

Coefficients accumulate_to_grid(const BSplineTransform& t, const DisplacementField& wf) {
  const Shape3 d = t.domain, g = t.grid;
  if (!(wf.shape() == d)) throw InputError("accumulate_to_grid: field shape differs from transform domain");
  const auto sz = sample_axis(d.z, t.spacing[0]);
  const auto sy = sample_axis(d.y, t.spacing[1]);
  const auto sx = sample_axis(d.x, t.spacing[2]);

  std::vector<double> g2(std::size_t(g.z) * d.y * d.x * 3, 0.0);
  for (int z = 0; z < d.z; ++z)
    for (int n = 0; n < 4; ++n) {
      const double w = sz.weights[z][n];
      double* o = &g2[at3(sz.first[z] + n, 0, 0, d.y, d.x)];
      const Vec3* src = &wf(z, 0, 0);
      for (int i = 0; i < d.y * d.x; ++i) {
        o[3 * i] += w * src[i][0];
        o[3 * i + 1] += w * src[i][1];
        o[3 * i + 2] += w * src[i][2];
      }
    }
  std::vector<double> g1(std::size_t(g.z) * g.y * d.x * 3, 0.0);
  for (int iz = 0; iz < g.z; ++iz)
    for (int y = 0; y < d.y; ++y)
      for (int m = 0; m < 4; ++m) {
        const double w = sy.weights[y][m];
        const double* src = &g2[at3(iz, y, 0, d.y, d.x)];
        double* o = &g1[at3(iz, sy.first[y] + m, 0, g.y, d.x)];
        for (int i = 0; i < d.x * 3; ++i) o[i] += w * src[i];
      }
  Coefficients out = Coefficients::Zero(Eigen::Index(g.count()), 3);
  double* c = out.data();
  for (int iz = 0; iz < g.z; ++iz)
    for (int iy = 0; iy < g.y; ++iy)
      for (int x = 0; x < d.x; ++x) {
        const double* src = &g1[at3(iz, iy, x, g.y, d.x)];
        for (int l = 0; l < 4; ++l) {
          const double w = sx.weights[x][l];
          double* o = c + t.control_index(iz, iy, sx.first[x] + l) * 3;
          o[0] += w * src[0], o[1] += w * src[1], o[2] += w * src[2];
        }
      }
  return out;
}

namespace {

// Corner indices and weights for one axis. Positions outside [0, n-1] clamp to the border; `inside` is
// cleared so the derivative along that axis vanishes.
inline void linear_axis(double p, int n, int& i0, int& i1, double& f, bool& inside) {
  inside = p >= 0.0 && p <= double(n - 1);
  if (n == 1) {
    i0 = i1 = 0;
    f = 0.0;
    return;
  }
  p = std::clamp(p, 0.0, double(n - 1));
  i0 = std::min(int(std::floor(p)), n - 2);
  i1 = i0 + 1;
  f = p - i0;
}

template <typename T>
double trilinear(const Volume<T>& img, const Vec3& p, Vec3* grad, bool clamp) {
  int z0, z1, y0, y1, x0, x1;
  double fz, fy, fx;
  const Shape3 s = img.shape();
  if (!(p.allFinite())) {
    if (grad) grad->setZero();
    return 0.0;
  }
  bool in_z, in_y, in_x;
  linear_axis(p[0], s.z, z0, z1, fz, in_z);
  linear_axis(p[1], s.y, y0, y1, fy, in_y);
  linear_axis(p[2], s.x, x0, x1, fx, in_x);
  if (!clamp && !(in_z && in_y && in_x)) {
    if (grad) grad->setZero();
    return 0.0;
  }
  const double c000 = img(z0, y0, x0), c001 = img(z0, y0, x1), c010 = img(z0, y1, x0),
               c011 = img(z0, y1, x1), c100 = img(z1, y0, x0), c101 = img(z1, y0, x1),
               c110 = img(z1, y1, x0), c111 = img(z1, y1, x1);
  const double c00 = c000 + fx * (c001 - c000), c01 = c010 + fx * (c011 - c010);
  const double c10 = c100 + fx * (c101 - c100), c11 = c110 + fx * (c111 - c110);
  const double c0 = c00 + fy * (c01 - c00), c1 = c10 + fy * (c11 - c10);
  if (grad) {
    const double dx0 = (1 - fy) * (c001 - c000) + fy * (c011 - c010);
    const double dx1 = (1 - fy) * (c101 - c100) + fy * (c111 - c110);
    (*grad)[0] = s.z > 1 && in_z ? c1 - c0 : 0.0;
    (*grad)[1] = s.y > 1 && in_y ? (1 - fz) * (c01 - c00) + fz * (c11 - c10) : 0.0;
    (*grad)[2] = s.x > 1 && in_x ? (1 - fz) * dx0 + fz * dx1 : 0.0;
  }
  return c0 + fz * (c1 - c0);
}

template <typename T>
T nearest(const Volume<T>& img, const Vec3& p) {
  const int z = int(std::floor(p[0] + 0.5)), y = int(std::floor(p[1] + 0.5)), x = int(std::floor(p[2] + 0.5));
  return img.contains(z, y, x) ? img(z, y, x) : T{0};
}

}  // namespace

double sample_linear(const Volume<double>& img, const Vec3& p, Vec3* grad) { return trilinear(img, p, grad, true); }

Volume3D apply_field(const Volume3D& in, const DisplacementField& u, Interpolation interp) {
  if (!(u.shape() == in.shape())) throw InputError("apply_transform: image shape differs from transform domain");
  Volume3D out(in.shape(), in.spacing());
  out.unit = in.unit;
  const Shape3 s = in.shape();
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) {
        const Vec3 q = Vec3(z, y, x) + u(z, y, x);
        out(z, y, x) = interp == Interpolation::linear ? float(trilinear(in, q, nullptr, false)) : nearest(in, q);
      }
  return out;
}

Volume<std::uint8_t> apply_field(const Volume<std::uint8_t>& in, const DisplacementField& u) {
  if (!(u.shape() == in.shape())) throw InputError("apply_transform: image shape differs from transform domain");
  Volume<std::uint8_t> out(in.shape(), in.spacing());
  const Shape3 s = in.shape();
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x) out(z, y, x) = nearest(in, Vec3(z, y, x) + u(z, y, x));
  return out;
}

Volume3D apply_transform(const Volume3D& in, const BSplineTransform& t, Interpolation interp) {
  if (!(in.shape() == t.domain)) throw InputError("apply_transform: image shape differs from transform domain");
  return apply_field(in, dense_field(t), interp);
}

Volume<std::uint8_t> apply_transform(const Volume<std::uint8_t>& in, const BSplineTransform& t,
                                     Interpolation interp) {
  if (interp == Interpolation::linear)
    throw InputError("apply_transform: label images require nearest-neighbour interpolation");
  if (!(in.shape() == t.domain)) throw InputError("apply_transform: image shape differs from transform domain");
  return apply_field(in, dense_field(t));
}

namespace {

struct StencilTerm {
  std::array<std::array<double, 3>, 3> axis;  // weights on j-1, j, j+1 per axis
  double multiplier;
};

std::vector<StencilTerm> bending_terms(const BSplineTransform& t) {
  const auto active = t.active_axes();
  const std::array<double, 3> value{1.0 / 6, 4.0 / 6, 1.0 / 6};
  std::vector<StencilTerm> terms;
  for (int a = 0; a < 3; ++a) {
    if (!active[a]) continue;
    StencilTerm s{{value, value, value}, 1.0};
    const double inv = 1.0 / (t.spacing[a] * t.spacing[a]);
    s.axis[a] = {inv, -2 * inv, inv};
    terms.push_back(s);
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      if (!active[a] || !active[b]) continue;
      StencilTerm s{{value, value, value}, 2.0};
      s.axis[a] = {-0.5 / t.spacing[a], 0.0, 0.5 / t.spacing[a]};
      s.axis[b] = {-0.5 / t.spacing[b], 0.0, 0.5 / t.spacing[b]};
      terms.push_back(s);
    }
  return terms;
}

}  // namespace

double bending_energy(const BSplineTransform& t, Coefficients* grad) {
  const auto active = t.active_axes();
  const auto terms = bending_terms(t);
  if (grad) *grad = Coefficients::Zero(t.coefficients.rows(), 3);
  const int n[3] = {t.grid.z, t.grid.y, t.grid.x};
  int lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = 1;
    hi[a] = active[a] ? n[a] - 2 : 1;
  }
  std::size_t knots = 0;
  double energy = 0.0;
  for (int jz = lo[0]; jz <= hi[0]; ++jz)
    for (int jy = lo[1]; jy <= hi[1]; ++jy)
      for (int jx = lo[2]; jx <= hi[2]; ++jx) {
        ++knots;
        for (const auto& term : terms) {
          Eigen::RowVector3d v = Eigen::RowVector3d::Zero();
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              for (int c = 0; c < 3; ++c) {
                const double w = term.axis[0][a] * term.axis[1][b] * term.axis[2][c];
                if (w != 0.0)
                  v += w * t.coefficients.row(Eigen::Index(t.control_index(jz - 1 + a, jy - 1 + b, jx - 1 + c)));
              }
          energy += term.multiplier * v.squaredNorm();
          if (!grad) continue;
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              for (int c = 0; c < 3; ++c) {
                const double w = term.axis[0][a] * term.axis[1][b] * term.axis[2][c];
                if (w != 0.0)
                  grad->row(Eigen::Index(t.control_index(jz - 1 + a, jy - 1 + b, jx - 1 + c))) +=
                      2.0 * term.multiplier * w * v;
              }
        }
      }
  if (knots == 0) return 0.0;
  if (grad) *grad /= double(knots);
  return energy / double(knots);
}

}  // namespace lss
