use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyModule;

fn run(code: &str) -> PyResult<()> {
    Python::initialize();
    Python::attach(|py| {
        let module = PyModule::new(py, "koopman_py")?;
        koopman_py::koopman_py(&module)?;
        py.import("sys")?.getattr("modules")?.set_item("koopman_py", module)?;
        let code = CString::new(code).unwrap();
        py.run(&code, None, None)
    })
}

#[test]
fn edmd_on_linear_oracle() {
    run(r#"
import koopman_py as kp
data = kp.Snapshots.linear([[0.9, 0.0], [0.0, 0.5]], 10, 10, seed=3)
spec = kp.edmd(kp.FixedDictionary.monomial(2, 1), data, sigma=0.0)
lams = sorted(l.real for l in spec.eigenvalues())
assert all(abs(a - b) < 1e-8 for a, b in zip(lams, [0.5, 0.9, 1.0])), lams
assert max(spec.residuals()) < 1e-8
assert spec.to_csv().splitlines()[0] == "re_lambda,im_lambda,abs_lambda,residual"
"#)
    .unwrap();
}

#[test]
fn errors_map_to_python_exceptions() {
    run(r#"
import koopman_py as kp
try:
    kp.Snapshots([[1.0]], [[1.0, 2.0]])
except ValueError:
    pass
else:
    raise AssertionError("shape mismatch accepted")
try:
    kp.Snapshots.read("/nonexistent/file.csv")
except OSError:
    pass
else:
    raise AssertionError("missing file accepted")
"#)
    .unwrap();
}

#[test]
fn train_accepts_config_keywords() {
    run(r#"
import koopman_py as kp
data = kp.Snapshots.linear([[0.9, 0.0], [0.0, 0.5]], 10, 10, seed=3)
net = kp.NeuralDictionary(2, [4], 1, seed=0)
_, spec, report = kp.train(data, net, max_epochs=3, batch_size=20, seed=2)
assert report["epochs_run"] == 3
try:
    kp.train(data, net, max_epoch=3)
except ValueError:
    pass
else:
    raise AssertionError("unknown key accepted")
"#)
    .unwrap();
}
