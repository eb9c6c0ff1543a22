#include <doctest.h>

#include <cmath>

#include "lss/core/preprocess.hpp"
#include "lss/registration/bspline.hpp"
#include "lss/registration/register.hpp"
#include "lss/registration/transform_io.hpp"
#include "lss/synthdata/phantom.hpp"
#include "test_util.hpp"

using namespace lss;

namespace {

double beta3(double t) {
  t = std::abs(t);
  if (t < 1.0) return 2.0 / 3.0 - t * t + 0.5 * t * t * t;
  if (t < 2.0) return (2.0 - t) * (2.0 - t) * (2.0 - t) / 6.0;
  return 0.0;
}

// Direct sum over every control point.
Vec3 brute_displacement(const BSplineTransform& t, const Vec3& p) {
  Vec3 u = Vec3::Zero();
  for (int iz = 0; iz < t.grid.z; ++iz)
    for (int iy = 0; iy < t.grid.y; ++iy)
      for (int ix = 0; ix < t.grid.x; ++ix) {
        const double w = beta3(p[0] / t.spacing[0] - (iz - 1)) * beta3(p[1] / t.spacing[1] - (iy - 1)) *
                         beta3(p[2] / t.spacing[2] - (ix - 1));
        u += w * t.coefficients.row(Eigen::Index(t.control_index(iz, iy, ix))).transpose();
      }
  return u;
}

BinaryMask3D ellipsoid_mask(const Shape3& s, const Vec3& c, const Vec3& r) {
  BinaryMask3D m(s);
  for (int z = 0; z < s.z; ++z)
    for (int y = 0; y < s.y; ++y)
      for (int x = 0; x < s.x; ++x)
        m(z, y, x) = (Vec3(z, y, x) - c).cwiseQuotient(r).squaredNorm() <= 1.0 ? 1 : 0;
  return m;
}

double mask_dice(const BinaryMask3D& a, const BinaryMask3D& b) {
  double inter = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    total += (a[i] ? 1 : 0) + (b[i] ? 1 : 0);
  }
  return 2 * inter / total;
}

}  // namespace

TEST_CASE("zero coefficients give zero displacement") {
  const auto t = BSplineTransform::identity({9, 17, 12}, {4, 8, 5});
  const auto u = dense_field(t);
  for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i].isZero());
  CHECK(displacement_at(t, Vec3(4.5, 3.25, 11)).isZero());
}

TEST_CASE("constant coefficients reproduce the constant") {
  auto t = BSplineTransform::identity({10, 20, 15}, {4, 6, 5});
  const Vec3 c(0.7, -1.3, 2.1);
  for (Eigen::Index r = 0; r < t.coefficients.rows(); ++r) t.coefficients.row(r) = c.transpose();
  const auto u = dense_field(t);
  double worst = 0;
  for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, (u[i] - c).cwiseAbs().maxCoeff());
  CHECK(worst < 1e-5);
}

TEST_CASE("single control point matches the direct tensor-product sum") {
  auto t = BSplineTransform::identity({24, 24, 24}, {8, 8, 8});
  const Vec3 c(1.0, -2.0, 0.5);
  t.coefficients.row(Eigen::Index(t.control_index(2, 2, 2))) = c.transpose();
  const Vec3 centre(8, 8, 8);
  CHECK((displacement_at(t, centre) - c * std::pow(2.0 / 3.0, 3)).norm() < 1e-12);

  Rng rng(3);
  for (Eigen::Index r = 0; r < t.coefficients.rows(); ++r)
    for (int a = 0; a < 3; ++a) t.coefficients(r, a) = uniform_real(rng, -2, 2);
  const auto field = dense_field(t);
  for (int k = 0; k < 50; ++k) {
    const Vec3 p(uniform_real(rng, 0, 23), uniform_real(rng, 0, 23), uniform_real(rng, 0, 23));
    CHECK((displacement_at(t, p) - brute_displacement(t, p)).norm() < 1e-10);
  }
  CHECK((field(5, 17, 9) - brute_displacement(t, Vec3(5, 17, 9))).norm() < 1e-10);
  CHECK_THROWS_AS(displacement_at(t, Vec3(-1, 0, 0)), InputError);
}

TEST_CASE("identity warp is exact") {
  Volume3D v({6, 7, 8});
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(std::sin(double(i)));
  const auto t = BSplineTransform::identity(v.shape(), {4, 4, 4});
  CHECK(apply_transform(v, t) == v);
}

TEST_CASE("backward warp convention") {
  Volume3D v({1, 1, 12}, {}, 0.0f);
  v(0, 0, 5) = 1.0f;
  auto t = BSplineTransform::identity(v.shape(), {4, 4, 4});
  t.coefficients.col(2).setConstant(2.0);
  const Volume3D out = apply_transform(v, t);
  CHECK(out(0, 0, 3) == doctest::Approx(1.0));
  CHECK(out(0, 0, 5) == doctest::Approx(0.0));
  // Samples beyond the input take the background value.
  CHECK(out(0, 0, 11) == 0.0f);

  BinaryMask3D m({1, 1, 12});
  m(0, 0, 5) = 1;
  CHECK(apply_transform(m, t)(0, 0, 3) == 1);
  CHECK_THROWS_AS(apply_transform(m, t, Interpolation::linear), InputError);
}

TEST_CASE("warp followed by the numerically inverted field restores the image") {
  PhantomParams pp = PhantomParams::for_shape({24, 64, 64});
  pp.noise_sigma = 0.0;
  pp.deformation_amplitude = 0.0;
  pp.ggo_count = {0, 0};
  pp.cons_count = {0, 0};
  Rng rng(21);
  const PhantomPatient patient = generate_patient(pp, rng);
  // Blurred so that two rounds of linear interpolation stay within tolerance at edges.
  const Volume3D sharp = min_max_normalize(patient.timepoints[0].image);
  Volume<double> smooth(sharp.shape());
  for (std::size_t i = 0; i < smooth.size(); ++i) smooth[i] = sharp[i];
  smooth = gaussian_smooth(smooth, 2.0);
  Volume3D img(sharp.shape());
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = float(smooth[i]);
  const Shape3 s = img.shape();
  const auto t = random_transform(s, 16.0, 3.0, rng);
  const DisplacementField u = dense_field(t);
  const Volume3D warped = apply_field(img, u, Interpolation::linear);

  // v(q) = -u(q + v(q)) by fixed-point iteration.
  DisplacementField v(s, {}, Vec3::Zero());
  for (int it = 0; it < 30; ++it)
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y)
        for (int x = 0; x < s.x; ++x) {
          Vec3 q = Vec3(z, y, x) + v(z, y, x);
          q = q.cwiseMax(Vec3::Zero()).cwiseMin(Vec3(s.z - 1, s.y - 1, s.x - 1));
          v(z, y, x) = -displacement_at(t, q);
        }
  const Volume3D back = apply_field(warped, v, Interpolation::linear);
  const int margin = 5;
  double worst = 0;
  for (int z = margin; z < s.z - margin; ++z)
    for (int y = margin; y < s.y - margin; ++y)
      for (int x = margin; x < s.x - margin; ++x) worst = std::max(worst, double(std::abs(back(z, y, x) - img(z, y, x))));
  CHECK(worst <= 0.05);
}

TEST_CASE("registration objective gradient matches finite differences") {
  const Shape3 s{16, 16, 16};
  const auto fixed = ellipsoid_mask(s, Vec3(7.5, 8, 7), Vec3(5, 6, 4.5));
  const auto moving = ellipsoid_mask(s, Vec3(8, 7, 8), Vec3(4.5, 5, 5.5));
  Volume<double> f(s), m(s);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = fixed[i], m[i] = moving[i];
  const RegistrationObjective obj(gaussian_smooth(m, 1.5), gaussian_smooth(f, 1.5), 0.05);

  auto t = BSplineTransform::identity(s, {6, 6, 6});
  Rng rng(5);
  for (Eigen::Index r = 0; r < t.coefficients.rows(); ++r)
    for (int a = 0; a < 3; ++a) t.coefficients(r, a) = uniform_real(rng, -0.7, 0.7);
  Coefficients g;
  obj.evaluate(t, &g);
  const double scale = g.cwiseAbs().maxCoeff();
  int checked = 0;
  double worst = 0;
  for (Eigen::Index r = 0; r < g.rows(); ++r)
    for (int a = 0; a < 3; ++a) {
      if (std::abs(g(r, a)) < 0.05 * scale) continue;
      const double h = 1e-6;
      auto tp = t, tm = t;
      tp.coefficients(r, a) += h;
      tm.coefficients(r, a) -= h;
      const double fd = (obj.evaluate(tp) - obj.evaluate(tm)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g(r, a)) / std::max(std::abs(fd), std::abs(g(r, a))));
      ++checked;
    }
  CHECK(checked > 20);
  CHECK(worst < 1e-3);
}

TEST_CASE("bending energy vanishes for constant fields and has a consistent gradient") {
  auto t = BSplineTransform::identity({20, 20, 20}, {5, 5, 5});
  t.coefficients.col(1).setConstant(1.5);
  Coefficients g;
  CHECK(bending_energy(t, &g) == doctest::Approx(0.0));
  CHECK(g.cwiseAbs().maxCoeff() < 1e-12);

  Rng rng(8);
  for (Eigen::Index r = 0; r < t.coefficients.rows(); ++r)
    for (int a = 0; a < 3; ++a) t.coefficients(r, a) = uniform_real(rng, -1, 1);
  const double e = bending_energy(t, &g);
  CHECK(e > 0);
  for (int k = 0; k < 10; ++k) {
    const Eigen::Index r = uniform_int(rng, 0, int(t.coefficients.rows()) - 1);
    const int a = uniform_int(rng, 0, 2);
    auto tp = t, tm = t;
    tp.coefficients(r, a) += 1e-5;
    tm.coefficients(r, a) -= 1e-5;
    const double fd = (bending_energy(tp) - bending_energy(tm)) / 2e-5;
    CHECK(fd == doctest::Approx(g(r, a)).epsilon(1e-5).scale(1e-8));
  }
}

TEST_CASE("identical masks register to near-zero displacement") {
  const Shape3 s{32, 32, 32};
  const auto m = ellipsoid_mask(s, Vec3(15.5, 16, 15), Vec3(10, 11, 9));
  const auto r = register_masks(m, m);
  const auto u = dense_field(r.transform);
  double mean = 0;
  for (std::size_t i = 0; i < u.size(); ++i) mean += u[i].norm();
  CHECK(mean / double(u.size()) <= 0.1);
}

TEST_CASE("registration recovers a known warp") {
  const Shape3 s{48, 48, 48};
  PhantomParams pp = PhantomParams::for_shape(s);
  BinaryMask3D m(s);
  for (const auto& e : pp.lungs) {
    const auto one = ellipsoid_mask(s, e.center, e.radii);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] |= one[i];
  }
  Rng rng(2);
  const auto truth = random_transform(s, 16.0, 4.0, rng);
  const auto fixed = apply_transform(m, truth);
  const double before = mask_dice(m, fixed);
  const auto r = register_masks(m, fixed);
  const double after = mask_dice(apply_transform(m, r.transform), fixed);
  CHECK(after >= 0.95);
  CHECK(after > before);
  CHECK(r.final_loss < r.initial_loss);
}

TEST_CASE("registration preconditions") {
  BinaryMask3D a({8, 8, 8}), b({8, 8, 9});
  a(4, 4, 4) = 1;
  b(4, 4, 4) = 1;
  CHECK_THROWS_AS(register_masks(a, b), InputError);
  CHECK_THROWS_AS(register_masks(a, BinaryMask3D({8, 8, 8})), InputError);
  RegistrationParams p;
  p.levels = 0;
  CHECK_THROWS_AS(register_masks(a, a, p), InputError);
}

TEST_CASE("non-convergence returns a warning and the best transform") {
  const Shape3 s{16, 16, 16};
  const auto a = ellipsoid_mask(s, Vec3(7, 7, 7), Vec3(4, 5, 4));
  const auto b = ellipsoid_mask(s, Vec3(8, 9, 7), Vec3(4, 4, 5));
  RegistrationParams p;
  p.max_iterations = 1;
  p.levels = 1;
  const auto r = register_masks(a, b, p);
  CHECK_FALSE(r.converged);
  CHECK(r.warning.find("did not converge") != std::string::npos);
  CHECK(r.final_loss <= r.initial_loss);
}

TEST_CASE("transform file round trip") {
  test::TempDir dir;
  Rng rng(4);
  const auto t = random_transform({10, 30, 30}, 8.0, 2.0, rng);
  save_transform(t, dir / "t.bspline.json");
  const auto back = load_transform(dir / "t.bspline.json");
  CHECK(back.grid == t.grid);
  CHECK(back.domain == t.domain);
  CHECK((back.coefficients - t.coefficients).cwiseAbs().maxCoeff() < 1e-6);
}
