import csv
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

import femsmooth.experiments as experiments
from femsmooth import (
    ConfigError, ConvergenceRecord, RunConfig, compare_estimators, make_lshape, mesh_svg,
    parse_config, read_triangle, run_experiment, serialize_config, uniform_red_refine,
    write_triangle,
)
from femsmooth.afem import AfemAbort, IterationRow
from femsmooth.cli import main
from femsmooth.mesh import bisect_marked, validate
from femsmooth.plots import loglog_svg

SVG = "{http://www.w3.org/2000/svg}"


def test_parse_defaults():
    cfg = parse_config("problem=poisson_lshape")
    assert cfg == RunConfig("poisson_lshape")
    assert (cfg.theta, cfg.degree, cfg.norm, cfg.variant, cfg.estimator) == (0.5, 1, "h1_semi", "red", "jacobi")


def test_parse_comments_and_aliases():
    cfg = parse_config("# header\nproblem = poisson_lshape  # trailing\n\np=2\nfine_degree=4\nvariant=degree\n")
    assert (cfg.degree, cfg.q, cfg.variant) == (2, 4, "degree")


@pytest.mark.parametrize("text, line", [
    ("problem=poisson_lshape\ntheta=1.5", 2),
    ("problem=poisson_lshape\nestimator=magic", 2),
    ("problem=poisson_lshape\ncolour=red", 2),
    ("theta=0.3", 0),
    ("problem=poisson_lshape\nproblem=poisson_lshape", 2),
    ("problem=nowhere", 1),
    ("problem=poisson_lshape\nmax_dofs=ten", 2),
    ("problem=poisson_lshape\njust words", 2),
    ("problem=poisson_lshape\n\np=0", 3),
])
def test_parse_errors_name_line(text, line):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line
    if line:
        assert str(exc.value).startswith(f"line {line}:")


def test_serialize_roundtrip():
    cfg = parse_config("problem=poisson_lshape\nestimator=gauss_seidel\nnorm=l2")
    text = serialize_config(cfg)
    assert parse_config(text) == cfg
    assert serialize_config(parse_config(text)) == text
    assert "estimator=gauss_seidel" in text and "norm=l2" in text


def small(tmp_path, **kw):
    return RunConfig("poisson_lshape", max_dofs=kw.pop("max_dofs", 600), output=str(tmp_path), **kw)


def svg_root(path):
    root = ET.parse(path).getroot()
    assert root.tag == SVG + "svg"
    return root


def test_run_experiment_files(tmp_path):
    res = run_experiment(small(tmp_path))
    for name in ("convergence.csv", "convergence.svg", "mesh_final.svg", "summary.txt"):
        assert (tmp_path / name).is_file()
    text = (tmp_path / "convergence.csv").read_text()
    rec = ConvergenceRecord.from_csv(text)
    assert len(rec) == len(res.record)
    assert rec.rows[-1].dofs > 600 >= rec.rows[-2].dofs
    # lossless at 17 digits
    assert rec.column("error").tolist() == res.record.column("error").tolist()
    assert len(list(svg_root(tmp_path / "convergence.svg").iter(SVG + "polyline"))) == 2
    svg_root(tmp_path / "mesh_final.svg")
    summary = (tmp_path / "summary.txt").read_text()
    assert "slope" in summary and "effectivity" in summary


def test_run_experiment_byte_identical(tmp_path):
    run_experiment(small(tmp_path / "a"))
    run_experiment(small(tmp_path / "b"))
    for name in ("convergence.csv", "summary.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_partial_csv_on_abort(tmp_path, monkeypatch):
    def failing(problem, config, keep_meshes=False, on_row=None, mesh=None):
        rec = ConvergenceRecord([IterationRow(0, 21, 0.1, 0.1, 1.0, 0.0)])
        on_row(rec.rows[0])
        raise AfemAbort("iteration 1: boom", rec)

    monkeypatch.setattr(experiments, "afem_run", failing)
    with pytest.raises(AfemAbort):
        run_experiment(small(tmp_path))
    rows = list(csv.reader(open(tmp_path / "convergence.csv")))
    assert len(rows) == 2 and rows[1][:2] == ["0", "21"]


def test_compare(tmp_path):
    res = compare_estimators(small(tmp_path), ["jacobi", "residual_h1"])
    rows = list(csv.reader(open(tmp_path / "compare.csv")))
    assert rows[0] == ["estimator", "iter", "dofs", "error", "estimate", "effectivity"]
    assert len(rows) - 1 == sum(len(r.record) for r in res.values())
    assert len(list(svg_root(tmp_path / "compare.svg").iter(SVG + "polyline"))) == 4
    assert (tmp_path / "jacobi" / "convergence.csv").is_file()
    with pytest.raises(ValueError):
        compare_estimators(small(tmp_path), ["jacobi", "jacobi"])


def test_compare_parallel_matches_serial(tmp_path):
    a = compare_estimators(small(tmp_path / "s"), ["jacobi", "gauss_seidel"], jobs=1)
    b = compare_estimators(small(tmp_path / "p"), ["jacobi", "gauss_seidel"], jobs=2)
    assert (tmp_path / "s" / "compare.csv").read_bytes() == (tmp_path / "p" / "compare.csv").read_bytes()
    assert a.keys() == b.keys()


def test_loglog_svg_series_count():
    x = np.array([10, 100, 1000])
    svg = loglog_svg([("a", x, 1 / x), ("b", x, 2 / x), ("c", x, x ** -0.5)], ylabel="e")
    root = ET.fromstring(svg)
    assert len(list(root.iter(SVG + "polyline"))) == 3


def test_triangle_io_roundtrip(tmp_path):
    m = make_lshape()
    m = bisect_marked(uniform_red_refine(m)[0], [0, 5, 9])
    base = write_triangle(m, tmp_path / "m")
    back = read_triangle(base)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.elements, m.elements)
    assert np.array_equal(back.ref_edge, m.ref_edge)
    assert validate(back) == []
    (tmp_path / "m.edge").unlink()
    assert len(read_triangle(base).boundary_edges) == len(m.boundary_edges)


def test_mesh_svg_is_xml():
    m = make_lshape(2)
    root = ET.fromstring(mesh_svg(m, values=np.arange(m.n_elements, dtype=float), title="t"))
    assert len(list(root.iter(SVG + "polygon"))) == m.n_elements


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text + f"\noutput={tmp_path / 'out'}\n")
    return str(path)


def test_cli_run_and_exit_codes(tmp_path, capsys, monkeypatch):
    cfg = write_cfg(tmp_path, "problem=poisson_lshape\nmax_dofs=300")
    assert main(["run", cfg]) == 0
    assert (tmp_path / "out" / "convergence.csv").is_file()
    assert main(["compare", cfg, "--estimators", "jacobi,residual_h1"]) == 0
    assert main(["mesh-dump", cfg, "--final"]) == 0
    assert (tmp_path / "out" / "mesh_final.node").is_file()
    bad = write_cfg(tmp_path, "problem=poisson_lshape\ntheta=2", "bad.cfg")
    assert main(["run", bad]) == 1
    assert "line 2" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1

    def boom(cfg, directory=None, keep_meshes=False):
        raise AfemAbort("iteration 3: solver residual 1e-3", ConvergenceRecord())

    monkeypatch.setattr(experiments, "run_experiment", boom)
    assert main(["run", cfg]) == 2


def test_cli_check(capsys):
    assert main(["check"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_console_module_entry(tmp_path):
    cfg = write_cfg(tmp_path, "problem=poisson_lshape\nbogus=1")
    proc = subprocess.run([sys.executable, "-m", "femsmooth", "run", cfg], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "line 2" in proc.stderr


def test_seed_drives_contraction_probe(tmp_path):
    a = run_experiment(small(tmp_path / "a", max_dofs=100, seed=1))
    b = run_experiment(small(tmp_path / "b", max_dofs=100, seed=2))
    la = (a.directory / "summary.txt").read_text().splitlines()[-1]
    lb = (b.directory / "summary.txt").read_text().splitlines()[-1]
    assert la.startswith("two-level contraction") and "seed 1" in la and "seed 2" in lb
    assert 0 < float(la.split()[-1]) < 1
