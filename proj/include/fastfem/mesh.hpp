#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "fastfem/graph.hpp"
#include "fastfem/types.hpp"

namespace fastfem {

using Vec3 = std::array<double, 3>;
using Tet = std::array<Index, 4>;

enum class ElementKind { Tetra4 };

/// Tetrahedral mesh. The element order is fixed at construction because it
/// defines the order in which element contributions reach the assembler.
class Mesh {
 public:
  Mesh() = default;
  Mesh(std::vector<Vec3> nodes, std::vector<Tet> elements, std::vector<Index> fixed_nodes = {});

  Index num_nodes() const { return static_cast<Index>(nodes_.size()); }
  Index num_elements() const { return static_cast<Index>(elements_.size()); }
  Index num_dofs() const { return 3 * num_nodes(); }
  ElementKind element_kind() const { return ElementKind::Tetra4; }

  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<Tet>& elements() const { return elements_; }
  const std::vector<Index>& fixed_nodes() const { return fixed_nodes_; }

  /// Replaces the fixed node set (sorted and deduplicated on entry).
  void set_fixed_nodes(std::vector<Index> fixed);

  /// Degrees of freedom of the fixed nodes, ascending.
  std::vector<Index> fixed_dofs() const;

  bool operator==(const Mesh&) const = default;

 private:
  std::vector<Vec3> nodes_;
  std::vector<Tet> elements_;
  std::vector<Index> fixed_nodes_;
};

/// (b - a) . ((c - a) x (d - a)) / 6
double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

/// Regular nx*ny*nz node grid, every hexahedral cell split into six
/// tetrahedra along its main diagonal (Kuhn split). Node (i,j,k) has index
/// i + nx*(j + ny*k); cells are visited k-major, then j, then i.
Mesh generate_beam(Index nx, Index ny, Index nz, double spacing, const Vec3& origin = {0.0, 0.0, 0.0});

/// Nodes of a generated beam on one boundary face: grid index along `axis`
/// equal to 0, or to its maximum when `max_side` is set.
std::vector<Index> beam_face_nodes(Index nx, Index ny, Index nz, int axis, bool max_side);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::filesystem::path& file, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads a TetGen ASCII `.node` / `.ele` pair. One-based files are shifted to
/// zero-based indexing. Attribute and marker columns are ignored.
Mesh load_tetgen(const std::filesystem::path& node_path, const std::filesystem::path& ele_path);

/// Writes a zero-based TetGen `.node` / `.ele` pair with full double precision.
void save_tetgen(const Mesh& mesh, const std::filesystem::path& node_path, const std::filesystem::path& ele_path);

/// Node graph: (i, j) is an edge iff i != j share an element.
Graph vertex_adjacency(const Mesh& mesh);

}  // namespace fastfem
