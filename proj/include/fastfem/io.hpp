#pragma once

#include <filesystem>
#include <span>

#include "fastfem/csr.hpp"
#include "fastfem/mesh.hpp"

namespace fastfem {

/// Legacy ASCII VTK unstructured grid: POINTS from `x` (3n, full precision),
/// CELLS with the mesh tetrahedra, CELL_TYPES 10.
void write_vtk(const std::filesystem::path& path, const Mesh& mesh, std::span<const double> x);

/// MatrixMarket coordinate real general, one-based.
void write_matrix_market(const std::filesystem::path& path, const CsrMatrix& a);

}  // namespace fastfem
