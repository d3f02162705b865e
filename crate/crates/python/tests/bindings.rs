use pydirreg::pydirreg;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    pyo3::append_to_inittab!(pydirreg);
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("pydirreg", py.import("pydirreg").unwrap()).unwrap();
        f(py, &globals);
    });
}

fn eval<'py>(py: Python<'py>, globals: &Bound<'py, PyDict>, code: &str) -> Bound<'py, PyAny> {
    let code = std::ffi::CString::new(code).unwrap();
    py.eval(&code, Some(globals), None).unwrap_or_else(|e| panic!("{e}"))
}

#[test]
fn module_round_trip() {
    with_module(|py, g| {
        let d: f64 = eval(
            py,
            g,
            "pydirreg.ConvexSet({'kind': 'ball', 'center': [0, 0], 'radius': 1}).distance([3, 4])",
        )
        .extract()
        .unwrap();
        assert!((d - 4.0).abs() < 1e-12);

        let m: f64 = eval(
            py,
            g,
            "pydirreg.Map({'builtin': 'linear', 'matrix': [[3, 0], [0, 0.25]]}, \
             set=pydirreg.ConvexSet({'kind': 'singleton', 'p': [0, 0]})).coderivative_slope([0, 0], [0, 0])",
        )
        .extract()
        .unwrap();
        assert!((m - 0.25).abs() < 1e-9);

        let v: f64 = eval(py, g, "pydirreg.Program.builtin('square-geq').value([0.5])")
            .extract()
            .unwrap();
        assert!((v - 0.25).abs() < 1e-5, "{v}");

        let err = py
            .eval(c"pydirreg.Map({'builtin': 'nope'})", Some(g), None)
            .unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));

        let tau: f64 = eval(
            py,
            g,
            "pydirreg.Query(pydirreg.Map({'builtin': 'identity', 'dim': 1}), [0], [0], 1.0, 1.0, \
             {'lo': [-3], 'hi': [3]}, samples=200).estimate_modulus(False)['tau_estimate']",
        )
        .extract()
        .unwrap();
        assert!((tau - 1.0).abs() < 1e-6);
    });
}
