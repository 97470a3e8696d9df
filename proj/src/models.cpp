#include "fastfem/models.hpp"

#include <cmath>

namespace fastfem {

void MaterialParams::validate() const {
  if (!(young_modulus > 0.0)) throw InvalidArgument("material: young_modulus must be > 0");
  if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5)) throw InvalidArgument("material: poisson_ratio must lie in [0, 0.5)");
  if (!(density > 0.0)) throw InvalidArgument("material: density must be > 0");
}

std::string to_string(MaterialLaw law) {
  return law == MaterialLaw::Corotational ? "corotational" : "stvk";
}

MaterialLaw parse_material_law(const std::string& name) {
  if (name == "corotational") return MaterialLaw::Corotational;
  if (name == "stvk") return MaterialLaw::StVenantKirchhoff;
  throw InvalidArgument("material.law: unknown law '" + name + "' (expected corotational or stvk)");
}

Eigen::Matrix<double, 6, 6> elasticity_matrix(const MaterialParams& params) {
  const double lambda = params.lame_lambda();
  const double mu = params.lame_mu();
  Eigen::Matrix<double, 6, 6> c = Eigen::Matrix<double, 6, 6>::Zero();
  c.topLeftCorner<3, 3>().setConstant(lambda);
  for (int i = 0; i < 3; ++i) c(i, i) += 2.0 * mu;
  for (int i = 3; i < 6; ++i) c(i, i) = mu;
  return c;
}

Eigen::Matrix<double, 6, 12> strain_displacement(const Eigen::Matrix<double, 4, 3>& g) {
  Eigen::Matrix<double, 6, 12> b = Eigen::Matrix<double, 6, 12>::Zero();
  for (int a = 0; a < 4; ++a) {
    const int c = 3 * a;
    b(0, c + 0) = g(a, 0);
    b(1, c + 1) = g(a, 1);
    b(2, c + 2) = g(a, 2);
    b(3, c + 0) = g(a, 1);
    b(3, c + 1) = g(a, 0);
    b(4, c + 1) = g(a, 2);
    b(4, c + 2) = g(a, 1);
    b(5, c + 0) = g(a, 2);
    b(5, c + 2) = g(a, 0);
  }
  return b;
}

namespace {

Mat3 edge_matrix(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  Mat3 d;
  for (int r = 0; r < 3; ++r) {
    d(r, 0) = p1[r] - p0[r];
    d(r, 1) = p2[r] - p0[r];
    d(r, 2) = p3[r] - p0[r];
  }
  return d;
}

Mat3 edge_matrix(std::span<const double> x, const Tet& t) {
  Mat3 d;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) d(r, c) = x[3 * t[c + 1] + r] - x[3 * t[0] + r];
  return d;
}

void check_positions(std::span<const double> x, Index dofs) {
  if (static_cast<Index>(x.size()) != dofs) throw InvalidArgument("position vector has the wrong length");
  for (double v : x)
    if (!std::isfinite(v)) throw NumericalError("non-finite nodal position");
}

Vec12 gather(std::span<const double> x, const Tet& t) {
  Vec12 out;
  for (int a = 0; a < 4; ++a)
    for (int i = 0; i < 3; ++i) out(3 * a + i) = x[3 * t[a] + i];
  return out;
}

void scatter_add(std::vector<double>& f, const Tet& t, const Vec12& fe) {
  for (int a = 0; a < 4; ++a)
    for (int i = 0; i < 3; ++i) f[3 * t[a] + i] += fe(3 * a + i);
}

void emit(TripletStream& sink, const Tet& t, const Mat12& k) {
  for (int a = 0; a < 4; ++a)
    for (int i = 0; i < 3; ++i) {
      const Index row = 3 * t[a] + i;
      for (int b = 0; b < 4; ++b)
        for (int j = 0; j < 3; ++j) sink.add(row, 3 * t[b] + j, k(3 * a + i, 3 * b + j));
    }
}

void accumulate_kv(std::span<const double> v, std::span<double> kv, const Tet& t, const Mat12& k) {
  if (v.empty() || kv.empty()) return;
  const Vec12 ke_v = k * gather(v, t);
  for (int a = 0; a < 4; ++a)
    for (int i = 0; i < 3; ++i) kv[3 * t[a] + i] += ke_v(3 * a + i);
}

}  // namespace

std::vector<ElementPrecomp> precompute(const Mesh& mesh, const MaterialParams& params) {
  params.validate();
  const auto c = elasticity_matrix(params);
  std::vector<ElementPrecomp> out(mesh.num_elements());
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const Tet& t = mesh.elements()[e];
    const auto& p = mesh.nodes();
    const Mat3 dm = edge_matrix(p[t[0]], p[t[1]], p[t[2]], p[t[3]]);
    const double det = dm.determinant();
    if (!(std::abs(det) > 0.0) || !std::isfinite(det))
      throw NumericalError("precompute: element " + std::to_string(e) + " is degenerate at rest");
    ElementPrecomp& pc = out[e];
    pc.rest_inverse = dm.inverse();
    pc.volume = std::abs(det) / 6.0;
    pc.gradients.bottomRows<3>() = pc.rest_inverse;
    pc.gradients.row(0) = -pc.rest_inverse.colwise().sum();
    const auto b = strain_displacement(pc.gradients);
    pc.stiffness = pc.volume * b.transpose() * c * b;
  }
  return out;
}

Mat3 polar_rotation(const Mat3& f) {
  auto svd_rotation = [&] {
    Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
    return Mat3(u * v.transpose());
  };
  if (!(f.determinant() > 0.0)) return svd_rotation();

  Mat3 r = f;
  for (int iter = 0; iter < 50; ++iter) {
    const Mat3 inv_t = r.inverse().transpose();
    const double gamma = std::sqrt(std::sqrt(inv_t.squaredNorm() / r.squaredNorm()));
    const Mat3 next = 0.5 * (gamma * r + inv_t / gamma);
    const double change = (next - r).norm();
    r = next;
    if (change <= 1e-12 * r.norm()) return r;
  }
  return svd_rotation();
}

std::vector<double> corotational_forces_and_stiffness(const Mesh& mesh, std::span<const ElementPrecomp> precomp,
                                                      std::span<const double> x, TripletStream* sink,
                                                      std::span<const double> v, std::span<double> kv) {
  check_positions(x, mesh.num_dofs());
  std::vector<double> f(mesh.num_dofs(), 0.0);
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const Tet& t = mesh.elements()[e];
    const ElementPrecomp& pc = precomp[e];
    const Mat3 r = polar_rotation(edge_matrix(x, t) * pc.rest_inverse);

    Vec12 xe = gather(x, t);
    Vec12 local;
    for (int a = 0; a < 4; ++a) {
      const auto& p = mesh.nodes()[t[a]];
      local.segment<3>(3 * a) = r.transpose() * xe.segment<3>(3 * a) - Eigen::Vector3d(p[0], p[1], p[2]);
    }
    const Vec12 local_f = pc.stiffness * local;
    Vec12 fe;
    for (int a = 0; a < 4; ++a) fe.segment<3>(3 * a) = r * local_f.segment<3>(3 * a);
    scatter_add(f, t, fe);

    if (sink != nullptr || !kv.empty()) {
      Mat12 k;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
          k.block<3, 3>(3 * a, 3 * b) = r * pc.stiffness.block<3, 3>(3 * a, 3 * b) * r.transpose();
      if (sink != nullptr) emit(*sink, t, k);
      accumulate_kv(v, kv, t, k);
    }
  }
  return f;
}

Mat3 stvk_stress(const Mat3& f, const MaterialParams& params) {
  const Mat3 green = 0.5 * (f.transpose() * f - Mat3::Identity());
  return params.lame_lambda() * green.trace() * Mat3::Identity() + 2.0 * params.lame_mu() * green;
}

std::vector<double> stvk_forces_and_stiffness(const Mesh& mesh, std::span<const ElementPrecomp> precomp,
                                              const MaterialParams& params, std::span<const double> x,
                                              TripletStream* sink, std::span<const double> v, std::span<double> kv) {
  check_positions(x, mesh.num_dofs());
  const double lambda = params.lame_lambda();
  const double mu = params.lame_mu();
  std::vector<double> f(mesh.num_dofs(), 0.0);
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const Tet& t = mesh.elements()[e];
    const ElementPrecomp& pc = precomp[e];
    const auto& g = pc.gradients;  // row a = grad N_a
    const Mat3 def = edge_matrix(x, t) * pc.rest_inverse;
    const Mat3 s = stvk_stress(def, params);
    const Mat3 p = def * s;

    Vec12 fe;
    for (int a = 0; a < 4; ++a) fe.segment<3>(3 * a) = pc.volume * p * g.row(a).transpose();
    scatter_add(f, t, fe);

    if (sink == nullptr && kv.empty()) continue;
    Mat12 k;
    for (int b = 0; b < 4; ++b)
      for (int j = 0; j < 3; ++j) {
        // dF for a unit displacement of node b along axis j.
        Mat3 df = Mat3::Zero();
        df.row(j) = g.row(b);
        const Mat3 dg = 0.5 * (df.transpose() * def + def.transpose() * df);
        const Mat3 ds = lambda * dg.trace() * Mat3::Identity() + 2.0 * mu * dg;
        const Mat3 dp = df * s + def * ds;
        for (int a = 0; a < 4; ++a) k.block<3, 1>(3 * a, 3 * b + j) = pc.volume * dp * g.row(a).transpose();
      }
    if (sink != nullptr) emit(*sink, t, k);
    accumulate_kv(v, kv, t, k);
  }
  return f;
}

void lumped_mass(const Mesh& mesh, const MaterialParams& params, std::span<const ElementPrecomp> precomp,
                 TripletStream& sink) {
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const double m = params.density * precomp[e].volume / 4.0;
    for (Index node : mesh.elements()[e])
      for (Index i = 0; i < 3; ++i) sink.add(3 * node + i, 3 * node + i, m);
  }
}

std::vector<double> lumped_mass_vector(const Mesh& mesh, const MaterialParams& params,
                                       std::span<const ElementPrecomp> precomp) {
  std::vector<double> m(mesh.num_dofs(), 0.0);
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const double share = params.density * precomp[e].volume / 4.0;
    for (Index node : mesh.elements()[e])
      for (Index i = 0; i < 3; ++i) m[3 * node + i] += share;
  }
  return m;
}

std::vector<double> rest_positions(const Mesh& mesh) {
  std::vector<double> x(mesh.num_dofs());
  for (Index i = 0; i < mesh.num_nodes(); ++i)
    for (int c = 0; c < 3; ++c) x[3 * i + c] = mesh.nodes()[i][c];
  return x;
}

namespace {

class CorotationalModel final : public ForceModel {
 public:
  CorotationalModel(const Mesh& mesh, const MaterialParams& params)
      : mesh_(mesh), params_(params), precomp_(precompute(mesh, params)) {}

  std::vector<double> evaluate(std::span<const double> x, TripletStream* sink, std::span<const double> v,
                               std::span<double> kv) const override {
    return corotational_forces_and_stiffness(mesh_, precomp_, x, sink, v, kv);
  }
  const Mesh& mesh() const override { return mesh_; }
  const MaterialParams& params() const override { return params_; }
  std::span<const ElementPrecomp> precomp() const override { return precomp_; }

 private:
  Mesh mesh_;
  MaterialParams params_;
  std::vector<ElementPrecomp> precomp_;
};

class StvkModel final : public ForceModel {
 public:
  StvkModel(const Mesh& mesh, const MaterialParams& params)
      : mesh_(mesh), params_(params), precomp_(precompute(mesh, params)) {}

  std::vector<double> evaluate(std::span<const double> x, TripletStream* sink, std::span<const double> v,
                               std::span<double> kv) const override {
    return stvk_forces_and_stiffness(mesh_, precomp_, params_, x, sink, v, kv);
  }
  const Mesh& mesh() const override { return mesh_; }
  const MaterialParams& params() const override { return params_; }
  std::span<const ElementPrecomp> precomp() const override { return precomp_; }

 private:
  Mesh mesh_;
  MaterialParams params_;
  std::vector<ElementPrecomp> precomp_;
};

}  // namespace

std::unique_ptr<ForceModel> make_force_model(MaterialLaw law, const Mesh& mesh, const MaterialParams& params) {
  if (law == MaterialLaw::Corotational) return std::make_unique<CorotationalModel>(mesh, params);
  return std::make_unique<StvkModel>(mesh, params);
}

}  // namespace fastfem
