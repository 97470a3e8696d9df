#include "fastfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace fastfem {

bool Graph::has_edge(Index u, Index v) const { return std::binary_search(begin(u), end(u), v); }

Graph Graph::from_edges(Index num_vertices, std::vector<std::pair<Index, Index>> edges) {
  std::vector<std::pair<Index, Index>> both;
  both.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u == v) continue;
    both.emplace_back(u, v);
    both.emplace_back(v, u);
  }
  std::sort(both.begin(), both.end());
  both.erase(std::unique(both.begin(), both.end()), both.end());
  Graph g;
  g.offsets.assign(static_cast<std::size_t>(num_vertices) + 1, 0);
  g.adjacency.reserve(both.size());
  for (auto [u, v] : both) {
    ++g.offsets[u + 1];
    g.adjacency.push_back(v);
  }
  for (Index i = 0; i < num_vertices; ++i) g.offsets[i + 1] += g.offsets[i];
  return g;
}

double signed_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  const double e1[3] = {b[0] - a[0], b[1] - a[1], b[2] - a[2]};
  const double e2[3] = {c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  const double e3[3] = {d[0] - a[0], d[1] - a[1], d[2] - a[2]};
  const double cross[3] = {e2[1] * e3[2] - e2[2] * e3[1], e2[2] * e3[0] - e2[0] * e3[2],
                           e2[0] * e3[1] - e2[1] * e3[0]};
  return (e1[0] * cross[0] + e1[1] * cross[1] + e1[2] * cross[2]) / 6.0;
}

Mesh::Mesh(std::vector<Vec3> nodes, std::vector<Tet> elements, std::vector<Index> fixed_nodes)
    : nodes_(std::move(nodes)), elements_(std::move(elements)) {
  const Index n = num_nodes();
  for (std::size_t e = 0; e < elements_.size(); ++e) {
    const Tet& t = elements_[e];
    for (Index v : t)
      if (v < 0 || v >= n)
        throw InvalidArgument("mesh: element " + std::to_string(e) + " references node " + std::to_string(v) +
                              " outside [0, " + std::to_string(n) + ")");
    if (signed_volume(nodes_[t[0]], nodes_[t[1]], nodes_[t[2]], nodes_[t[3]]) == 0.0)
      throw InvalidArgument("mesh: element " + std::to_string(e) + " is degenerate");
  }
  set_fixed_nodes(std::move(fixed_nodes));
}

void Mesh::set_fixed_nodes(std::vector<Index> fixed) {
  std::sort(fixed.begin(), fixed.end());
  fixed.erase(std::unique(fixed.begin(), fixed.end()), fixed.end());
  if (!fixed.empty() && (fixed.front() < 0 || fixed.back() >= num_nodes()))
    throw InvalidArgument("mesh: fixed node index out of range");
  fixed_nodes_ = std::move(fixed);
}

std::vector<Index> Mesh::fixed_dofs() const {
  std::vector<Index> dofs;
  dofs.reserve(fixed_nodes_.size() * 3);
  for (Index v : fixed_nodes_)
    for (Index c = 0; c < 3; ++c) dofs.push_back(3 * v + c);
  return dofs;
}

Mesh generate_beam(Index nx, Index ny, Index nz, double spacing, const Vec3& origin) {
  if (nx < 2 || ny < 2 || nz < 2)
    throw InvalidArgument("generate_beam: every grid dimension must be >= 2");
  if (!(spacing > 0.0)) throw InvalidArgument("generate_beam: spacing must be positive");

  std::vector<Vec3> nodes;
  nodes.reserve(static_cast<std::size_t>(nx) * ny * nz);
  for (Index k = 0; k < nz; ++k)
    for (Index j = 0; j < ny; ++j)
      for (Index i = 0; i < nx; ++i)
        nodes.push_back({origin[0] + spacing * i, origin[1] + spacing * j, origin[2] + spacing * k});

  // Corner c of a cell has offset (c & 1, (c >> 1) & 1, (c >> 2) & 1). Each
  // tetrahedron walks from corner 0 to corner 7 adding one axis at a time.
  static constexpr int axis_orders[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  auto id = [&](Index i, Index j, Index k) { return i + nx * (j + ny * k); };

  std::vector<Tet> elements;
  elements.reserve(static_cast<std::size_t>(6) * (nx - 1) * (ny - 1) * (nz - 1));
  for (Index k = 0; k + 1 < nz; ++k)
    for (Index j = 0; j + 1 < ny; ++j)
      for (Index i = 0; i + 1 < nx; ++i) {
        auto corner = [&](int c) { return id(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)); };
        for (const auto& order : axis_orders) {
          const int c1 = 1 << order[0];
          const int c2 = c1 | (1 << order[1]);
          Tet t{corner(0), corner(c1), corner(c2), corner(7)};
          if (signed_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]) < 0.0) std::swap(t[1], t[2]);
          elements.push_back(t);
        }
      }
  return Mesh(std::move(nodes), std::move(elements));
}

std::vector<Index> beam_face_nodes(Index nx, Index ny, Index nz, int axis, bool max_side) {
  if (axis < 0 || axis > 2) throw InvalidArgument("beam_face_nodes: axis must be 0, 1 or 2");
  const Index dims[3] = {nx, ny, nz};
  const Index target = max_side ? dims[axis] - 1 : 0;
  std::vector<Index> out;
  for (Index k = 0; k < nz; ++k)
    for (Index j = 0; j < ny; ++j)
      for (Index i = 0; i < nx; ++i) {
        const Index ijk[3] = {i, j, k};
        if (ijk[axis] == target) out.push_back(i + nx * (j + ny * k));
      }
  return out;
}

ParseError::ParseError(const std::filesystem::path& file, std::size_t line, const std::string& what)
    : std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + what), line_(line) {}

namespace {

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw ParseError(path, 0, "cannot open file");
  }

  /// Next non-blank line with comments stripped, split on whitespace.
  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ss(line);
      fields.clear();
      for (std::string f; ss >> f;) fields.push_back(f);
      if (!fields.empty()) return true;
    }
    return false;
  }

  std::size_t line() const { return line_no_; }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

  long long integer(const std::string& s) const {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      fail("expected an integer, got '" + s + "'");
    }
    if (used != s.size()) fail("expected an integer, got '" + s + "'");
    return v;
  }

  double real(const std::string& s) const {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      fail("expected a number, got '" + s + "'");
    }
    if (used != s.size()) fail("expected a number, got '" + s + "'");
    return v;
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
};

}  // namespace

Mesh load_tetgen(const std::filesystem::path& node_path, const std::filesystem::path& ele_path) {
  std::vector<std::string> f;

  LineReader nodes_in(node_path);
  if (!nodes_in.next(f)) nodes_in.fail("missing header");
  if (f.size() < 2) nodes_in.fail("malformed header: expected '<count> <dim> [attrs] [markers]'");
  const long long num_nodes = nodes_in.integer(f[0]);
  const long long dim = nodes_in.integer(f[1]);
  const long long num_attrs = f.size() > 2 ? nodes_in.integer(f[2]) : 0;
  const long long has_marker = f.size() > 3 ? nodes_in.integer(f[3]) : 0;
  if (num_nodes < 0 || num_attrs < 0 || has_marker < 0 || has_marker > 1)
    nodes_in.fail("malformed header: negative count or invalid marker flag");
  if (dim != 3) nodes_in.fail("dimension must be 3, got " + std::to_string(dim));

  std::vector<Vec3> nodes(static_cast<std::size_t>(num_nodes));
  long long base = 0;
  for (long long n = 0; n < num_nodes; ++n) {
    if (!nodes_in.next(f)) nodes_in.fail("expected " + std::to_string(num_nodes) + " nodes, file ended early");
    if (static_cast<long long>(f.size()) < 4 + num_attrs + has_marker) nodes_in.fail("too few columns in node line");
    const long long idx = nodes_in.integer(f[0]);
    if (n == 0) {
      if (idx != 0 && idx != 1) nodes_in.fail("first node index must be 0 or 1");
      base = idx;
    }
    if (idx != n + base) nodes_in.fail("node indices must be consecutive, expected " + std::to_string(n + base));
    nodes[n] = {nodes_in.real(f[1]), nodes_in.real(f[2]), nodes_in.real(f[3])};
  }

  LineReader ele_in(ele_path);
  if (!ele_in.next(f)) ele_in.fail("missing header");
  if (f.size() < 2) ele_in.fail("malformed header: expected '<count> <nodes per element> [attrs]'");
  const long long num_elems = ele_in.integer(f[0]);
  const long long per_elem = ele_in.integer(f[1]);
  const long long elem_attrs = f.size() > 2 ? ele_in.integer(f[2]) : 0;
  if (num_elems < 0 || elem_attrs < 0) ele_in.fail("malformed header: negative count");
  if (per_elem != 4) ele_in.fail("only 4-node tetrahedra are supported, got " + std::to_string(per_elem));

  std::vector<Tet> elements(static_cast<std::size_t>(num_elems));
  for (long long e = 0; e < num_elems; ++e) {
    if (!ele_in.next(f)) ele_in.fail("expected " + std::to_string(num_elems) + " elements, file ended early");
    if (static_cast<long long>(f.size()) < 5 + elem_attrs) ele_in.fail("too few columns in element line");
    for (int c = 0; c < 4; ++c) {
      const long long v = ele_in.integer(f[1 + c]) - base;
      if (v < 0 || v >= num_nodes) ele_in.fail("node index " + f[1 + c] + " out of range");
      elements[e][c] = static_cast<Index>(v);
    }
  }
  try {
    return Mesh(std::move(nodes), std::move(elements));
  } catch (const InvalidArgument& err) {
    throw ParseError(ele_path, 0, err.what());
  }
}

void save_tetgen(const Mesh& mesh, const std::filesystem::path& node_path, const std::filesystem::path& ele_path) {
  std::ofstream nodes(node_path);
  std::ofstream eles(ele_path);
  if (!nodes || !eles) throw InvalidArgument("save_tetgen: cannot open output files");
  nodes << std::setprecision(std::numeric_limits<double>::max_digits10);
  nodes << mesh.num_nodes() << " 3 0 0\n";
  for (Index i = 0; i < mesh.num_nodes(); ++i) {
    const Vec3& p = mesh.nodes()[i];
    nodes << i << ' ' << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  }
  eles << mesh.num_elements() << " 4 0\n";
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    const Tet& t = mesh.elements()[e];
    eles << e << ' ' << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  }
}

Graph vertex_adjacency(const Mesh& mesh) {
  std::vector<std::pair<Index, Index>> edges;
  edges.reserve(static_cast<std::size_t>(mesh.num_elements()) * 6);
  for (const Tet& t : mesh.elements())
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) edges.emplace_back(t[a], t[b]);
  return Graph::from_edges(mesh.num_nodes(), std::move(edges));
}

}  // namespace fastfem
