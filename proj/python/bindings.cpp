#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fastfem/scenario.hpp"

namespace py = pybind11;
using namespace fastfem;

namespace {

py::array_t<double> as_array(const std::vector<double>& v) {
  py::array_t<double> out({static_cast<py::ssize_t>(v.size() / 3), py::ssize_t{3}});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict as_dict(const StepMetrics& m) {
  py::dict d;
  d["step"] = m.step;
  d["assembly_ms"] = m.assembly_ms;
  d["pattern_rebuilt"] = m.pattern_rebuilt;
  d["solve_ms"] = m.solve_ms;
  d["cg_iterations"] = m.cg_iterations;
  d["residual"] = m.residual;
  d["precond_status"] = m.precond_status;
  d["staleness"] = m.staleness;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fastfem, m) {
  m.doc() = "Tetrahedral FEM simulation core";
  m.attr("__version__") = "0.1.0";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  py::class_<Mesh>(m, "Mesh")
      .def_property_readonly("num_nodes", &Mesh::num_nodes)
      .def_property_readonly("num_elements", &Mesh::num_elements)
      .def_property_readonly("num_dofs", &Mesh::num_dofs)
      .def_property_readonly("nodes", &Mesh::nodes)
      .def_property_readonly("elements", &Mesh::elements)
      .def_property_readonly("fixed_nodes", &Mesh::fixed_nodes);

  m.def("generate_beam", &generate_beam, py::arg("nx"), py::arg("ny"), py::arg("nz"), py::arg("spacing"),
        py::arg("origin") = Vec3{0.0, 0.0, 0.0});

  py::class_<Scenario>(m, "Scenario")
      .def(py::init([](const std::string& text) { return std::make_unique<Scenario>(parse_scenario(text)); }),
           py::arg("config_json"))
      .def("step", [](Scenario& s) { return as_dict(s.step()); })
      .def("run",
           [](Scenario& s, long steps) {
             py::list out;
             for (long i = 0; i < steps; ++i) out.append(as_dict(s.step()));
             return out;
           },
           py::arg("steps"))
      .def_property_readonly("mesh", &Scenario::mesh, py::return_value_policy::reference_internal)
      .def_property_readonly("positions", [](const Scenario& s) { return as_array(s.state().x); })
      .def_property_readonly("velocities", [](const Scenario& s) { return as_array(s.state().v); })
      .def_property_readonly("time", [](const Scenario& s) { return s.state().t; })
      .def("config_json", [](const Scenario& s) { return serialize_scenario(s.config()); });
}
