#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fastfem/assembly.hpp"
#include "fastfem/mesh.hpp"

namespace fastfem {

using Mat3 = Eigen::Matrix3d;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;

struct MaterialParams {
  double young_modulus = 1.0e6;
  double poisson_ratio = 0.3;
  double density = 1000.0;

  double lame_lambda() const {
    return young_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
  }
  double lame_mu() const { return young_modulus / (2.0 * (1.0 + poisson_ratio)); }

  /// Throws InvalidArgument unless E > 0, 0 <= nu < 0.5 and rho > 0.
  void validate() const;
  bool operator==(const MaterialParams&) const = default;
};

enum class MaterialLaw { Corotational, StVenantKirchhoff };

std::string to_string(MaterialLaw law);
MaterialLaw parse_material_law(const std::string& name);

/// Rest-state quantities of one linear tetrahedron.
struct ElementPrecomp {
  Mat3 rest_inverse;           // inverse of [x1-x0, x2-x0, x3-x0] at rest
  double volume = 0.0;         // |rest volume|
  Eigen::Matrix<double, 4, 3> gradients;  // shape function gradients, one row per node
  Mat12 stiffness;             // linear elastic V * B^T C B
};

/// Isotropic 6x6 stress-strain matrix in Voigt order (xx, yy, zz, xy, yz, zx),
/// engineering shear strains.
Eigen::Matrix<double, 6, 6> elasticity_matrix(const MaterialParams& params);

/// Strain-displacement matrix of a linear tetrahedron from its shape gradients.
Eigen::Matrix<double, 6, 12> strain_displacement(const Eigen::Matrix<double, 4, 3>& gradients);

/// Throws NumericalError on a zero-volume rest element.
std::vector<ElementPrecomp> precompute(const Mesh& mesh, const MaterialParams& params);

/// Rotation factor of the polar decomposition F = R S. Uses scaled Newton
/// iterations (tolerance 1e-12, at most 50 steps) and falls back to an SVD
/// when F is inverted or the iteration stalls, so det R = +1 always.
Mat3 polar_rotation(const Mat3& f);

/// Sign convention shared by every model: the returned f are internal forces
/// entering M a = f_ext - f(x, v), and the emitted stiffness is K = df/dx.
///
/// Each element adds its 12x12 block to `sink` (if given) row-major over
/// (node, axis) pairs, elements in mesh order. When `v` and `kv` are both
/// non-empty, kv += K v is accumulated element by element.
std::vector<double> corotational_forces_and_stiffness(const Mesh& mesh, std::span<const ElementPrecomp> precomp,
                                                      std::span<const double> x, TripletStream* sink,
                                                      std::span<const double> v = {}, std::span<double> kv = {});

std::vector<double> stvk_forces_and_stiffness(const Mesh& mesh, std::span<const ElementPrecomp> precomp,
                                              const MaterialParams& params, std::span<const double> x,
                                              TripletStream* sink, std::span<const double> v = {},
                                              std::span<double> kv = {});

/// Second Piola-Kirchhoff stress of St-Venant-Kirchhoff for a deformation gradient.
Mat3 stvk_stress(const Mat3& f, const MaterialParams& params);

/// Emits the lumped diagonal mass (rho V / 4 per node and axis), 12
/// triplets per element in mesh order.
void lumped_mass(const Mesh& mesh, const MaterialParams& params, std::span<const ElementPrecomp> precomp,
                 TripletStream& sink);

/// Same masses as `lumped_mass`, summed per DOF.
std::vector<double> lumped_mass_vector(const Mesh& mesh, const MaterialParams& params,
                                       std::span<const ElementPrecomp> precomp);

/// Element material behind a common interface so the integrator stays
/// agnostic of the constitutive law.
class ForceModel {
 public:
  virtual ~ForceModel() = default;
  virtual std::vector<double> evaluate(std::span<const double> x, TripletStream* sink, std::span<const double> v,
                                       std::span<double> kv) const = 0;
  virtual const Mesh& mesh() const = 0;
  virtual const MaterialParams& params() const = 0;
  virtual std::span<const ElementPrecomp> precomp() const = 0;
};

std::unique_ptr<ForceModel> make_force_model(MaterialLaw law, const Mesh& mesh, const MaterialParams& params);

/// Rest positions of the mesh as a flat 3n vector.
std::vector<double> rest_positions(const Mesh& mesh);

}  // namespace fastfem
