#include <random>

#include "doctest.h"
#include "fastfem/krylov.hpp"
#include "model_helpers.hpp"

using namespace fastfem;

namespace {

// K_(ai)(bj) = V (lambda g_ai g_bj + mu g_aj g_bi + mu delta_ij g_a . g_b),
// with shape gradients from inverting [1 x y z] at the four nodes.
Mat12 quadrature_stiffness(const std::array<Vec3, 4>& p, const MaterialParams& params) {
  Eigen::Matrix4d m;
  for (int a = 0; a < 4; ++a) m.row(a) << 1.0, p[a][0], p[a][1], p[a][2];
  const Eigen::Matrix4d coef = m.inverse();
  const double vol = std::abs(m.determinant()) / 6.0;
  const double lam = params.lame_lambda(), mu = params.lame_mu();
  Mat12 k;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      const Eigen::Vector3d ga = coef.col(a).tail<3>(), gb = coef.col(b).tail<3>();
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          k(3 * a + i, 3 * b + j) = vol * (lam * ga[i] * gb[j] + mu * ga[j] * gb[i] + (i == j ? mu * ga.dot(gb) : 0.0));
    }
  return k;
}

Mesh single_tet(const std::array<Vec3, 4>& p) { return Mesh({p[0], p[1], p[2], p[3]}, {{0, 1, 2, 3}}); }

}  // namespace

TEST_CASE("material params") {
  MaterialParams p{1e6, 0.25, 1000};
  CHECK(p.lame_mu() == doctest::Approx(4e5));
  CHECK(p.lame_lambda() == doctest::Approx(4e5));
  CHECK_THROWS_AS((MaterialParams{1e6, 0.5, 1}.validate()), InvalidArgument);
  CHECK_THROWS_AS((MaterialParams{-1, 0.3, 1}.validate()), InvalidArgument);
  CHECK(parse_material_law("stvk") == MaterialLaw::StVenantKirchhoff);
  try {
    parse_material_law("neo");
    FAIL("expected an error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("material.law") != std::string::npos);
  }
}

TEST_CASE("rest stiffness of the unit tetrahedron") {
  Mesh m = single_tet({Vec3{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  auto pre = precompute(m, MaterialParams{});
  const Mat12& k = pre[0].stiffness;
  CHECK((k - k.transpose()).norm() < 1e-12 * k.norm());
  Eigen::SelfAdjointEigenSolver<Mat12> eig(k);
  int zeros = 0;
  for (int i = 0; i < 12; ++i) zeros += std::abs(eig.eigenvalues()[i]) < 1e-8 * k.norm();
  CHECK(zeros == 6);
  CHECK(eig.eigenvalues().minCoeff() > -1e-8 * k.norm());
  Vec12 u;
  for (int a = 0; a < 4; ++a) u.segment<3>(3 * a) << 0.3, -1.2, 2.0;
  CHECK((k * u).norm() < 1e-9 * k.norm());
}

TEST_CASE("rest stiffness matches the quadrature oracle") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0), e(1e3, 1e7), nu(0.0, 0.49);
  for (int trial = 0; trial < 20; ++trial) {
    std::array<Vec3, 4> p;
    for (auto& q : p) q = {u(rng), u(rng), u(rng)};
    if (std::abs(signed_volume(p[0], p[1], p[2], p[3])) < 1e-3) continue;
    MaterialParams params{e(rng), nu(rng), 1000};
    auto pre = precompute(single_tet(p), params);
    const Mat12 ref = quadrature_stiffness(p, params);
    CHECK((pre[0].stiffness - ref).norm() < 1e-10 * ref.norm());
  }
}

TEST_CASE("polar rotation") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Mat3 f;
    for (int i = 0; i < 9; ++i) f(i / 3, i % 3) = u(rng);
    if (trial % 5 == 0) f = helpers::random_rotation(rng);
    const Mat3 r = polar_rotation(f);
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-10);
    CHECK(r.determinant() == doctest::Approx(1.0));
    if (f.determinant() > 0) {
      const Mat3 s = r.transpose() * f;
      CHECK((s - s.transpose()).norm() < 1e-8 * f.norm());
    }
  }
}

TEST_CASE("corotational rest and rigid motion") {
  Mesh m = generate_beam(3, 3, 3, 0.1);
  MaterialParams params;
  auto model = make_force_model(MaterialLaw::Corotational, m, params);
  auto x0 = rest_positions(m);
  auto f = model->evaluate(x0, nullptr, {}, {});
  CHECK(max_abs(f) < 1e-9);

  // Assembled rest tangent equals the sum of rest element stiffnesses.
  Eigen::MatrixXd k = helpers::assembled_stiffness(*model, x0);
  Eigen::MatrixXd ref = Eigen::MatrixXd::Zero(m.num_dofs(), m.num_dofs());
  for (Index e = 0; e < m.num_elements(); ++e)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        ref.block<3, 3>(3 * m.elements()[e][a], 3 * m.elements()[e][b]) +=
            model->precomp()[e].stiffness.block<3, 3>(3 * a, 3 * b);
  CHECK((k - ref).norm() < 1e-10 * ref.norm());

  std::mt19937_64 rng(9);
  auto xr = helpers::perturbed_state(m, rng, 0.0);
  f = model->evaluate(xr, nullptr, {}, {});
  CHECK(max_abs(f) < 1e-8 * k.norm());
}

TEST_CASE("stvk closed forms") {
  MaterialParams params{2e5, 0.3, 1000};
  CHECK(stvk_stress(Mat3::Identity(), params).norm() == 0.0);
  const double s = 1.1;
  Mat3 f = Mat3::Identity();
  f(0, 0) = s;
  const Mat3 st = stvk_stress(f, params);
  const double g = 0.5 * (s * s - 1.0);
  CHECK(st(0, 0) == doctest::Approx(params.lame_lambda() * g + 2.0 * params.lame_mu() * g));
  CHECK(st(1, 1) == doctest::Approx(params.lame_lambda() * g));
  CHECK(st(0, 1) == 0.0);

  Mesh m = generate_beam(2, 2, 3, 0.2);
  auto model = make_force_model(MaterialLaw::StVenantKirchhoff, m, params);
  auto lin = make_force_model(MaterialLaw::Corotational, m, params);
  auto x0 = rest_positions(m);
  CHECK(max_abs(model->evaluate(x0, nullptr, {}, {})) < 1e-9);
  const Eigen::MatrixXd ks = helpers::assembled_stiffness(*model, x0);
  const Eigen::MatrixXd kl = helpers::assembled_stiffness(*lin, x0);
  CHECK((ks - kl).norm() < 1e-10 * kl.norm());
}

TEST_CASE("tangents match central differences") {
  std::mt19937_64 rng(21);
  Mesh m = generate_beam(3, 2, 4, 0.05);
  MaterialParams params{1e6, 0.35, 1000};
  for (auto law : {MaterialLaw::Corotational, MaterialLaw::StVenantKirchhoff}) {
    auto model = make_force_model(law, m, params);
    for (int trial = 0; trial < 3; ++trial)
      CHECK(helpers::tangent_error(*model, helpers::perturbed_state(m, rng, 1e-5)) < 1e-4);
  }
  auto stvk = make_force_model(MaterialLaw::StVenantKirchhoff, m, params);
  CHECK(helpers::tangent_error(*stvk, helpers::perturbed_state(m, rng, 5e-2)) < 1e-4);
}

TEST_CASE("symmetry, momentum and fill order") {
  std::mt19937_64 rng(2);
  Mesh m = generate_beam(3, 3, 3, 0.1);
  for (auto law : {MaterialLaw::Corotational, MaterialLaw::StVenantKirchhoff}) {
    auto model = make_force_model(law, m, MaterialParams{});
    auto x1 = helpers::perturbed_state(m, rng, 1e-2);
    auto x2 = helpers::perturbed_state(m, rng, 1e-2);
    TripletStream s1, s2;
    s1.begin_pass();
    auto f = model->evaluate(x1, &s1, {}, {});
    s1.end_pass();
    s2.begin_pass();
    model->evaluate(x2, &s2, {}, {});
    s2.end_pass();
    CHECK(std::equal(s1.rows().begin(), s1.rows().end(), s2.rows().begin()));
    CHECK(std::equal(s1.cols().begin(), s1.cols().end(), s2.cols().begin()));
    CHECK(s1.size() == 144 * m.num_elements());

    auto [p, map] = build_pattern(s1, m.num_dofs());
    CsrMatrix k = compress(s1, map);
    CHECK(asymmetry(k) < 1e-10 * max_abs(k.values));

    double l1 = 0.0;
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    for (Index i = 0; i < m.num_nodes(); ++i)
      for (int c = 0; c < 3; ++c) {
        sum[c] += f[3 * i + c];
        l1 += std::abs(f[3 * i + c]);
      }
    CHECK(sum.cwiseAbs().maxCoeff() <= 1e-10 * l1);

    // kv accumulation equals K v.
    auto v = oracle::random_vector(m.num_dofs(), rng);
    std::vector<double> kv(m.num_dofs(), 0.0);
    model->evaluate(x1, nullptr, v, kv);
    auto ref = spmv(k, v);
    CHECK(oracle::rel_inf(kv, ref) < 1e-12);
  }
  std::vector<double> bad = rest_positions(m);
  bad[4] = std::nan("");
  CHECK_THROWS_AS(make_force_model(MaterialLaw::Corotational, m, MaterialParams{})->evaluate(bad, nullptr, {}, {}),
                  NumericalError);
}

TEST_CASE("lumped mass") {
  // Right tet with legs a has volume a^3/6; rho V = 4 for rho = 1, a^3 = 24.
  const double a = std::cbrt(24.0);
  Mesh t = single_tet({Vec3{0, 0, 0}, {a, 0, 0}, {0, a, 0}, {0, 0, a}});
  MaterialParams p{1e6, 0.3, 1.0};
  auto pre = precompute(t, p);
  auto mv = lumped_mass_vector(t, p, pre);
  for (double v : mv) CHECK(v == doctest::Approx(1.0));

  Mesh beam = generate_beam(4, 3, 5, 0.1);
  p.density = 1200;
  pre = precompute(beam, p);
  TripletStream s;
  s.begin_pass();
  lumped_mass(beam, p, pre, s);
  s.end_pass();
  auto [pat, map] = build_pattern(s, beam.num_dofs());
  CsrMatrix mm = compress(s, map);
  CHECK(mm.nnz() == beam.num_dofs());
  double total = 0.0;
  for (double v : mm.values) total += v;
  CHECK(total / 3.0 == doctest::Approx(1200 * 0.3 * 0.2 * 0.4));

  std::vector<double> ref(beam.num_dofs(), 0.0);
  for (Index e = 0; e < beam.num_elements(); ++e)
    for (Index node : beam.elements()[e])
      for (int c = 0; c < 3; ++c) ref[3 * node + c] += p.density * pre[e].volume / 4.0;
  mv = lumped_mass_vector(beam, p, pre);
  CHECK(oracle::rel_inf(mv, ref) < 1e-14);
  for (Index d = 0; d < beam.num_dofs(); ++d) CHECK(mm.at(d, d) == doctest::Approx(ref[d]).epsilon(1e-14));
}
