#include <pybind11/pybind11.h>

PYBIND11_MODULE(aam, m) { m.doc() = "placeholder"; }
