#include "fastfem/io.hpp"

#include <fstream>
#include <limits>

namespace fastfem {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(std::numeric_limits<double>::max_digits10);
  return out;
}

}  // namespace

void write_vtk(const std::filesystem::path& path, const Mesh& mesh, std::span<const double> x) {
  if (static_cast<Index>(x.size()) != mesh.num_dofs()) throw InvalidArgument("write_vtk: position vector size mismatch");
  std::ofstream out = open_out(path);
  out << "# vtk DataFile Version 3.0\nfastfem snapshot\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_nodes() << " double\n";
  for (Index i = 0; i < mesh.num_nodes(); ++i) out << x[3 * i] << ' ' << x[3 * i + 1] << ' ' << x[3 * i + 2] << '\n';
  out << "CELLS " << mesh.num_elements() << ' ' << 5 * mesh.num_elements() << '\n';
  for (const Tet& t : mesh.elements()) out << "4 " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  out << "CELL_TYPES " << mesh.num_elements() << '\n';
  for (Index e = 0; e < mesh.num_elements(); ++e) out << "10\n";
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_matrix_market(const std::filesystem::path& path, const CsrMatrix& a) {
  std::ofstream out = open_out(path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.nrows << ' ' << a.ncols << ' ' << a.nnz() << '\n';
  for (Index r = 0; r < a.nrows; ++r)
    for (Index k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k)
      out << r + 1 << ' ' << a.col_ind[k] + 1 << ' ' << a.values[k] << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace fastfem
