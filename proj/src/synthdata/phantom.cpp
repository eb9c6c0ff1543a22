#include "lss/synthdata/phantom.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace lss {

namespace {

struct Lesion {
  SegLabel label;
  Ellipsoid shape;
  double intensity;
  std::vector<double> scale;  // radius scale per timepoint
};

double ellipsoid_distance(const Vec3& q, const Ellipsoid& e, double scale = 1.0) {
  return ((q - e.center).array() / (e.radii.array() * scale)).matrix().norm();
}

double smoothstep(double e0, double e1, double x) {
  const double t = std::clamp((x - e0) / (e1 - e0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// GGO opacity as a function of normalized distance: flat core, soft shoulder,
// faint halo beyond the labelled boundary.
double ggo_weight(double d) {
  if (d <= 0.55) return 1.0;
  if (d <= 1.0) return 1.0 - 0.6 * smoothstep(0.55, 1.0, d);
  return 0.4 * (1.0 - smoothstep(1.0, 1.3, d));
}

Vec3 clamp_to_domain(const Vec3& q, const Shape3& d) {
  return {std::clamp(q[0], 0.0, double(d.z - 1)), std::clamp(q[1], 0.0, double(d.y - 1)),
          std::clamp(q[2], 0.0, double(d.x - 1))};
}

struct Spine {
  double cy, cx, ry, rx;
  bool contains(const Vec3& q) const {
    const double dy = (q[1] - cy) / ry, dx = (q[2] - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  }
};

Spine spine_for(const Shape3& s) {
  return {0.6 * s.y, 0.5 * s.x, 0.08 * s.y, 0.025 * s.x};
}

Vec3 sample_in_unit_ball(Rng& rng, double max_radius) {
  for (;;) {
    Vec3 v(uniform_real(rng, -1, 1), uniform_real(rng, -1, 1), uniform_real(rng, -1, 1));
    if (v.norm() <= 1.0) return v * max_radius;
  }
}

std::vector<Lesion> sample_lesions(const PhantomParams& p, Rng& rng) {
  std::vector<Lesion> out;
  const double aniso = p.spacing.x / p.spacing.z;
  auto add = [&](SegLabel label, int count, const RealRange& radius, const IntensityBand& band) {
    for (int i = 0; i < count; ++i) {
      Lesion l;
      l.label = label;
      const Ellipsoid& lung = p.lungs[std::size_t(uniform_int(rng, 0, 1))];
      l.shape.center = lung.center + (lung.radii.array() * sample_in_unit_ball(rng, 0.6).array()).matrix();
      const double r = uniform_real(rng, radius.lo, radius.hi);
      l.shape.radii = Vec3(r * aniso * uniform_real(rng, 0.8, 1.2), r * uniform_real(rng, 0.8, 1.2),
                           r * uniform_real(rng, 0.8, 1.2));
      l.intensity = uniform_real(rng, band.lo, band.hi);
      const bool late = uniform_real(rng, 0.0, 1.0) < p.late_onset_probability;
      const double s0 = uniform_real(rng, 0.7, 1.0);
      l.scale.push_back(late ? 0.0 : s0);
      for (int t = 1; t < p.timepoints; ++t)
        l.scale.push_back(std::clamp(l.scale.back() + uniform_real(rng, p.growth.lo, p.growth.hi), 0.0, 1.6));
      out.push_back(std::move(l));
    }
  };
  add(kGgo, uniform_int(rng, p.ggo_count.lo, p.ggo_count.hi), p.ggo_radius, p.ggo_band);
  add(kCons, uniform_int(rng, p.cons_count.lo, p.cons_count.hi), p.cons_radius, p.cons_band);
  return out;
}

struct Rendered {
  double intensity;
  std::uint8_t lung;
  std::uint8_t label;
};

Rendered render_point(const PhantomParams& p, const Spine& spine, const std::vector<Lesion>& lesions,
                      int lesion_time, const Vec3& q) {
  const bool in_lung = ellipsoid_distance(q, p.lungs[0]) <= 1.0 || ellipsoid_distance(q, p.lungs[1]) <= 1.0;
  if (!in_lung) return {spine.contains(q) ? p.spine_intensity : p.background_intensity, 0, kBackground};
  double intensity = p.lung_intensity;
  std::uint8_t label = kHealthy;
  double cons = -1.0;
  for (const auto& l : lesions) {
    const double s = l.scale[std::size_t(lesion_time)];
    if (s <= 0.0) continue;
    const double d = ellipsoid_distance(q, l.shape, s);
    if (l.label == kGgo) {
      const double w = ggo_weight(d);
      if (w > 0.0) intensity = std::max(intensity, p.lung_intensity + (l.intensity - p.lung_intensity) * w);
      if (d <= 1.0) label = std::max<std::uint8_t>(label, kGgo);
    } else if (d <= 1.0) {
      cons = std::max(cons, l.intensity);
      label = kCons;
    }
  }
  if (cons >= 0.0) intensity = cons;
  return {intensity, 1, label};
}

}  // namespace

std::array<Ellipsoid, 2> default_lungs(const Shape3& s) {
  const double cz = 0.5 * (s.z - 1), cy = 0.5 * (s.y - 1);
  const Vec3 radii(std::max(1.0, 0.48 * s.z), 0.36 * s.y, 0.17 * s.x);
  return {Ellipsoid{Vec3(cz, cy, 0.5 * (s.x - 1) - 0.21 * s.x), radii},
          Ellipsoid{Vec3(cz, cy, 0.5 * (s.x - 1) + 0.21 * s.x), radii}};
}

PhantomParams PhantomParams::for_shape(const Shape3& s) {
  PhantomParams p;
  p.shape = s;
  p.lungs = default_lungs(s);
  return p;
}

void PhantomParams::validate() const {
  if (shape.z < 1 || shape.y < 8 || shape.x < 8) throw InputError("phantom: shape too small");
  for (const auto& l : lungs) {
    if (!(l.radii.minCoeff() > 0)) throw InputError("phantom: lung radii must be > 0");
    for (int a = 0; a < 3; ++a) {
      const int ext[3] = {shape.z, shape.y, shape.x};
      if (l.center[a] < 0 || l.center[a] > ext[a] - 1) throw InputError("phantom: lung centre outside the volume");
    }
  }
  if (!(ggo_band.lo <= ggo_band.hi && cons_band.lo <= cons_band.hi))
    throw InputError("phantom: intensity bands must satisfy lo <= hi");
  if (!(ggo_band.hi < cons_band.lo)) throw InputError("phantom: GGO intensity band must lie below the CONS band");
  if (!(lung_intensity < ggo_band.lo)) throw InputError("phantom: lung intensity must lie below the GGO band");
  if (ggo_count.lo < 0 || ggo_count.lo > ggo_count.hi || cons_count.lo < 0 || cons_count.lo > cons_count.hi)
    throw InputError("phantom: lesion count ranges must satisfy 0 <= lo <= hi");
  if (!(ggo_radius.lo > 0 && ggo_radius.lo <= ggo_radius.hi && cons_radius.lo > 0 && cons_radius.lo <= cons_radius.hi))
    throw InputError("phantom: lesion radius ranges must satisfy 0 < lo <= hi");
  if (!(growth.lo <= growth.hi)) throw InputError("phantom: growth range must satisfy lo <= hi");
  if (deformation_amplitude < 0) throw InputError("phantom: deformation amplitude must be >= 0");
  if (!(deformation_amplitude < deformation_spacing / 2))
    throw InputError("phantom: deformation amplitude must be < control-grid spacing / 2");
  if (noise_sigma < 0) throw InputError("phantom: noise sigma must be >= 0");
  if (timepoints < 1) throw InputError("phantom: timepoints must be >= 1");
  if (!(late_onset_probability >= 0 && late_onset_probability <= 1))
    throw InputError("phantom: late-onset probability must be in [0,1]");
}

BSplineTransform random_transform(const Shape3& domain, double spacing, double amplitude, Rng& rng) {
  auto t = BSplineTransform::identity(domain, Vec3::Constant(spacing));
  const auto active = t.active_axes();
  for (Eigen::Index i = 0; i < t.coefficients.rows(); ++i)
    for (int a = 0; a < 3; ++a) {
      const double v = uniform_real(rng, -amplitude, amplitude);
      t.coefficients(i, a) = active[std::size_t(a)] ? v : 0.0;
    }
  return t;
}

PhantomPatient generate_patient(const PhantomParams& params, Rng& rng) {
  params.validate();
  const Shape3 s = params.shape;
  PhantomPatient patient;
  for (int t = 0; t + 1 < params.timepoints; ++t)
    patient.transforms.push_back(
        params.deformation_amplitude > 0
            ? random_transform(s, params.deformation_spacing, params.deformation_amplitude, rng)
            : BSplineTransform::identity(s, Vec3::Constant(params.deformation_spacing)));
  const auto lesions = sample_lesions(params, rng);
  const Spine spine = spine_for(s);
  std::normal_distribution<double> noise(0.0, 1.0);

  for (int t = 0; t < params.timepoints; ++t) {
    PhantomTimepoint tp{Volume3D(s, params.spacing), BinaryMask3D(s, params.spacing), SegMask3D(s, params.spacing)};
    SegMask3D pre(s, params.spacing);
    for (int z = 0; z < s.z; ++z)
      for (int y = 0; y < s.y; ++y)
        for (int x = 0; x < s.x; ++x) {
          // Canonical coordinates: chain the backward warps from t down to 0.
          Vec3 q(z, y, x);
          for (int k = t - 1; k >= 0; --k) q += displacement_at(patient.transforms[std::size_t(k)], clamp_to_domain(q, s));
          const Rendered r = render_point(params, spine, lesions, t, q);
          tp.lung(z, y, x) = r.lung;
          tp.seg(z, y, x) = r.label;
          double n = r.intensity;
          if (params.noise_sigma > 0) n += params.noise_sigma * noise(rng);
          tp.image(z, y, x) = normalized_to_hu(n);
          if (t > 0) pre(z, y, x) = render_point(params, spine, lesions, t - 1, q).label;
        }
    tp.image.unit = IntensityUnit::hu;
    patient.timepoints.push_back(std::move(tp));
    if (t > 0) patient.pre_growth_seg.push_back(std::move(pre));
  }
  return patient;
}

void to_json(nlohmann::json& j, const PhantomParams& p) {
  auto ell = [](const Ellipsoid& e) {
    return nlohmann::json{{"center", {e.center[0], e.center[1], e.center[2]}},
                          {"radii", {e.radii[0], e.radii[1], e.radii[2]}}};
  };
  j = nlohmann::json{
      {"shape", {p.shape.z, p.shape.y, p.shape.x}},
      {"spacing", {p.spacing.z, p.spacing.y, p.spacing.x}},
      {"lungs", {ell(p.lungs[0]), ell(p.lungs[1])}},
      {"lung_intensity", p.lung_intensity},
      {"background_intensity", p.background_intensity},
      {"spine_intensity", p.spine_intensity},
      {"ggo_count", {p.ggo_count.lo, p.ggo_count.hi}},
      {"cons_count", {p.cons_count.lo, p.cons_count.hi}},
      {"ggo_band", {p.ggo_band.lo, p.ggo_band.hi}},
      {"cons_band", {p.cons_band.lo, p.cons_band.hi}},
      {"ggo_radius", {p.ggo_radius.lo, p.ggo_radius.hi}},
      {"cons_radius", {p.cons_radius.lo, p.cons_radius.hi}},
      {"growth", {p.growth.lo, p.growth.hi}},
      {"late_onset_probability", p.late_onset_probability},
      {"deformation_amplitude", p.deformation_amplitude},
      {"deformation_spacing", p.deformation_spacing},
      {"noise_sigma", p.noise_sigma},
      {"timepoints", p.timepoints},
      {"seed", p.seed}};
}

void from_json(const nlohmann::json& j, PhantomParams& p) {
  static const char* kKeys[] = {"shape", "spacing", "lungs", "lung_intensity", "background_intensity",
                                "spine_intensity", "ggo_count", "cons_count", "ggo_band", "cons_band",
                                "ggo_radius", "cons_radius", "growth", "late_onset_probability",
                                "deformation_amplitude", "deformation_spacing", "noise_sigma", "timepoints",
                                "seed"};
  for (const auto& [key, _] : j.items())
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) == std::end(kKeys))
      throw InputError("phantom: unknown key \"" + key + "\"");
  if (j.contains("shape")) {
    const auto s = j.at("shape");
    p = PhantomParams::for_shape({s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>()});
  }
  auto pair = [&](const char* key, auto& lo, auto& hi) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw InputError(std::string("phantom: '") + key + "' must be [lo, hi]");
    v.at(0).get_to(lo);
    v.at(1).get_to(hi);
  };
  if (j.contains("spacing")) {
    const auto s = j.at("spacing");
    p.spacing = {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>()};
  }
  if (j.contains("lungs")) {
    const auto& l = j.at("lungs");
    if (!l.is_array() || l.size() != 2) throw InputError("phantom: 'lungs' must list two ellipsoids");
    for (std::size_t i = 0; i < 2; ++i)
      for (int a = 0; a < 3; ++a) {
        p.lungs[i].center[a] = l[i].at("center").at(std::size_t(a)).get<double>();
        p.lungs[i].radii[a] = l[i].at("radii").at(std::size_t(a)).get<double>();
      }
  }
  if (j.contains("lung_intensity")) j.at("lung_intensity").get_to(p.lung_intensity);
  if (j.contains("background_intensity")) j.at("background_intensity").get_to(p.background_intensity);
  if (j.contains("spine_intensity")) j.at("spine_intensity").get_to(p.spine_intensity);
  pair("ggo_count", p.ggo_count.lo, p.ggo_count.hi);
  pair("cons_count", p.cons_count.lo, p.cons_count.hi);
  pair("ggo_band", p.ggo_band.lo, p.ggo_band.hi);
  pair("cons_band", p.cons_band.lo, p.cons_band.hi);
  pair("ggo_radius", p.ggo_radius.lo, p.ggo_radius.hi);
  pair("cons_radius", p.cons_radius.lo, p.cons_radius.hi);
  pair("growth", p.growth.lo, p.growth.hi);
  if (j.contains("late_onset_probability")) j.at("late_onset_probability").get_to(p.late_onset_probability);
  if (j.contains("deformation_amplitude")) j.at("deformation_amplitude").get_to(p.deformation_amplitude);
  if (j.contains("deformation_spacing")) j.at("deformation_spacing").get_to(p.deformation_spacing);
  if (j.contains("noise_sigma")) j.at("noise_sigma").get_to(p.noise_sigma);
  if (j.contains("timepoints")) j.at("timepoints").get_to(p.timepoints);
  if (j.contains("seed")) j.at("seed").get_to(p.seed);
}

}  // namespace lss
