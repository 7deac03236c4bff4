import numpy as np
import pytest

from figkit.io import manifest_hash


def write_manifest(run_dir, items):
    digest = manifest_hash(items)
    full = dict(items)
    full["created"] = "2020-01-01T00:00:00Z"
    full["manifest_hash"] = digest
    with open(run_dir / "manifest.txt", "w") as fh:
        for key in sorted(full):
            fh.write(f"{key} = {full[key]}\n")
    return digest


def write_table(path, digest, columns, rows, slopes=None, label=None):
    with open(path, "w") as fh:
        fh.write(f"# manifest_hash={digest}\n")
        if label:
            fh.write(f"# label={label}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
        for name, value in (slopes or {}).items():
            fh.write(f"# slope {name} {value}\n")


@pytest.fixture()
def convergence_run(tmp_path):
    """Synthetic truncation-style run directory with a matching manifest."""
    items = {"study": "truncation", "level": "2", "seed": "1"}
    digest = write_manifest(tmp_path, items)
    s = np.array([2, 4, 8, 16])
    rows = [(int(v), 3.0 * v ** -1.6, 1.0 * v ** -1.7) for v in s]
    write_table(tmp_path / "truncation.csv", digest,
                ("s", "err_state", "err_T"), rows,
                slopes={"err_state": -1.6, "err_T": -1.7})
    return tmp_path


@pytest.fixture()
def trace_run(tmp_path):
    items = {"study": "optimize", "seed": "2"}
    digest = write_manifest(tmp_path, items)
    J = [1.0, 0.5, 0.30, 0.22, 0.20]
    for mode in ("constrained", "unconstrained"):
        scale = 1.0 if mode == "constrained" else 0.8
        rows = [(i, scale * j, 0.1, 1e-3, 1.0) for i, j in enumerate(J)]
        write_table(tmp_path / f"trace_{mode}.csv", digest,
                    ("iter", "J", "eta", "stationarity", "control_norm"),
                    rows, label=mode)
    return tmp_path


@pytest.fixture()
def field_run(tmp_path):
    """Trajectory dump of a constant-in-space field on the level-2 grid."""
    items = {"study": "optimize", "seed": "3"}
    digest = write_manifest(tmp_path, items)
    level, n_steps, horizon = 2, 4, 1.0
    n_dof = (2 ** level - 1) ** 2
    with open(tmp_path / "control.csv", "w") as fh:
        fh.write(f"# manifest_hash={digest}\n")
        fh.write("# label=test\n")
        fh.write(f"# level={level} n_steps={n_steps} horizon={horizon}\n")
        fh.write("k,t,node,value\n")
        for k in range(n_steps + 1):
            t = horizon * k / n_steps
            for node in range(n_dof):
                fh.write(f"{k},{t},{node},{0.7}\n")
    return tmp_path
