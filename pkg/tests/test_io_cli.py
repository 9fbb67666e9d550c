import json

import numpy as np
import pytest

from planckotoc import cli, io
from planckotoc.pipelines import ConfigError, load_config


def test_csv_roundtrip(tmp_path):
    rows = np.array([[0, 1, 0.5, 1e-30], [1, 0, -2.25, 3.0]])
    path = io.write_csv(tmp_path / "a" / "t.csv", ["m", "n", "Q", "value"], rows,
                        {"model": "x", "inf": float("inf"), "arr": np.arange(2)}, int_columns=("m", "n"))
    meta, cols, data = io.read_csv(path)
    assert cols == ["m", "n", "Q", "value"]
    assert np.array_equal(data, rows)
    assert meta == {"model": "x", "inf": "inf", "arr": [0, 1]}
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# planckotoc ")
    assert lines[3].startswith("0,1,")


def test_csv_errors(tmp_path):
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "x.csv", ["a", "b"], np.ones((2, 3)))
    (tmp_path / "empty.csv").write_text("# only a comment\n")
    with pytest.raises(ValueError, match="header"):
        io.read_csv(tmp_path / "empty.csv")


def test_png_roundtrip(tmp_path):
    rgb = np.zeros((1, 1, 3), np.uint8)
    rgb[0, 0] = (1, 2, 3)
    path = io.write_png(tmp_path / "one.png", rgb, {"k": "v"})
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert np.array_equal(io.read_png_rgb(path), rgb)
    assert io.read_png_text(path) == {"k": "v"}
    with pytest.raises(ValueError):
        io.write_png(tmp_path / "bad.png", np.zeros((2, 2), np.uint8))


def _section(tmp_path, values, Lq=2, Lp=3, meta=None):
    m, n = np.divmod(np.arange(Lq * Lp), Lp)
    rows = np.column_stack([m, n, m, n, values])
    return io.write_csv(tmp_path / "s.csv", ["m", "n", "Q", "P", "value"], rows, meta, int_columns=("m", "n"))


def test_heatmap_orientation_and_constant_grid(tmp_path):
    meta = {"coordinate_scale": 2.0, "grid": {"q_origin": 0.0, "q_extent": 4.0, "p_origin": -2.0, "p_extent": 4.0}}
    path = io.render_heatmap(_section(tmp_path, np.arange(6.0), meta=meta), block=1)
    img = io.read_png_rgb(path)
    assert img.shape == (3, 2, 3)
    # lowest value (m=0, n=0) sits bottom left, highest (m=1, n=2) top right
    assert tuple(img[2, 0]) == tuple(io.colormap(0.0))
    assert tuple(img[0, 1]) == tuple(io.colormap(1.0))
    text = io.read_png_text(path)
    assert json.loads(text["x_range"]) == [0.0, 2.0]
    assert json.loads(text["y_range"]) == [-1.0, 1.0]
    flat = io.read_png_rgb(io.render_heatmap(_section(tmp_path, np.full(6, 7.0)), block=2))
    assert (flat == io.colormap(0.0)).all()


def test_ragged_section(tmp_path):
    path = _section(tmp_path, np.arange(6.0))
    meta, cols, data = io.read_csv(path)
    with pytest.raises(io.RaggedGridError):
        io.section_to_grid(cols, data[:-1])
    dup = data.copy()
    dup[1, 1] = 0
    with pytest.raises(io.RaggedGridError):
        io.section_to_grid(cols, dup)
    with pytest.raises(io.RaggedGridError):
        io.section_to_grid(["m", "value"], data[:, [0, 4]])


def test_cli_quantum_section_at_zero_steps(tmp_path, capsys):
    assert cli.main(["quantum_section", "-m", "L=6", "-p", "steps=0", "--out", str(tmp_path)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["outputs"] == ["quantum_section.csv", "quantum_section.png"]
    meta, cols, data = io.read_csv(tmp_path / "quantum_section.csv")
    assert cols == ["m", "n", "Q", "P", "value"]
    assert data.shape == (36, 5)
    assert np.abs(data[:, 4]).max() < 1e-20
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert [o["path"] for o in manifest["outputs"]] == report["outputs"]
    assert manifest["config"]["model"]["L"] == 6


def test_cli_config_error_is_json(tmp_path, capsys):
    code = cli.main(["quantum_section", "-p", "bogus=1", "--out", str(tmp_path)])
    assert code == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config"
    assert err["field"] == "experiment[0].bogus"
    assert cli.main(["run", "no_such_recipe", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["quantum_section", "--threads", "0", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_cli_render_ragged_exit_code(tmp_path, capsys):
    path = io.write_csv(tmp_path / "r.csv", ["m", "n", "value"], [[0, 0, 1.0], [1, 1, 2.0]])
    assert cli.main(["render", str(path)]) == cli.EXIT_CONFIG
    assert json.loads(capsys.readouterr().err)["error"] == "ragged_grid"


def test_recipes_listed_and_loadable(capsys):
    names = cli.recipe_names()
    assert {"fig1", "fig2", "fig3", "fig4b", "fig5"} <= set(names)
    assert cli.main(["recipes"]) == 0
    assert capsys.readouterr().out.split() == names
    for name in names:
        for scale in ("desk", "paper"):
            cfg = load_config(cli.recipe_path(name), scale=scale)
            assert cfg.experiments


def test_load_config_rejects_unknown_model_key():
    with pytest.raises(ConfigError):
        load_config({"model": {"type": "kicked_rotor", "KK": 1}, "experiment": [{"kind": "quantum_section"}]})


def test_output_identical_across_thread_counts(tmp_path):
    outs = []
    for threads in ("1", "2"):
        d = tmp_path / threads
        args = ["otoc_curve", "--model", "lmg", "-m", "L=9", "-p", "t_max=2.0", "-p", "dt=0.1",
                "-p", "thermal='infinite'",
                "--threads", threads, "--out", str(d)]
        assert cli.main(args) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix in (".csv", ".png")})
    assert outs[0] and outs[0] == outs[1]


def test_per_cell_workers_do_not_change_output(tmp_path):
    outs = []
    for threads in ("1", "3"):
        d = tmp_path / threads
        args = ["entropy_curve", "-m", "L=12", "-p", "steps=6",
                "-p", "cells=[[0.1, 0.1], [0.35, 0.7], [0.6, 0.2], [0.9, 0.9]]", "--threads", threads, "--out", str(d)]
        assert cli.main(args) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.suffix == ".csv"})
    assert len(outs[0]) == 4 and outs[0] == outs[1]
