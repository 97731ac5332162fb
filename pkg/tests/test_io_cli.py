import json

import numpy as np
import pytest

from artifact.cfrac import eval_to_precision, preset
from artifact.cli import run
from artifact.density import siegel_mask
from artifact.dynamics import QuadraticMap
from artifact.errors import InputError
from artifact.geometry import RegionId
from artifact.io import csv_text, mask_bytes, parse_config, ppm_bytes, read_mask, read_ppm


def test_parse_config_strict():
    schema = {"n": int, "A": float}
    assert parse_config("n = 5\n# comment\nA = 2.5  # trailing\n\n", schema) == {"n": 5, "A": 2.5}
    for bad in ("m = 1", "n 5", "n = five", "n = 1\nn = 2"):
        with pytest.raises(InputError):
            parse_config(bad, schema)


def test_mask_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    bits = rng.random((13, 7)) < 0.4
    p = tmp_path / "m.mask"
    p.write_bytes(mask_bytes(bits, {"T": 10}))
    back, meta = read_mask(p)
    assert np.array_equal(back, bits) and meta["T"] == 10 and meta["shape"] == [13, 7]
    p.write_bytes(b"no header")
    with pytest.raises(InputError):
        read_mask(p)
    p.write_bytes(mask_bytes(bits, {})[:-1])
    with pytest.raises(InputError):
        read_mask(p)


def test_ppm_round_trip(tmp_path):
    bits = np.eye(4, 6, dtype=bool)
    p = tmp_path / "x.ppm"
    p.write_bytes(ppm_bytes(bits))
    img = read_ppm(p)
    assert img.shape == (4, 6, 3)
    assert np.array_equal(img[..., 0] == 255, bits)
    p.write_bytes(b"P3\n1 1\n255\n000")
    with pytest.raises(InputError):
        read_ppm(p)


def test_csv_text_formats_big_integers():
    text = csv_text(("k", "q"), [(1, 3 ** 100), (2, 0.5)])
    assert text.splitlines() == ["k,q", f"1,{3 ** 100}", "2,0.5"]


def _run(tmp_path, *argv):
    return run([*argv, "--out", str(tmp_path)])


def test_approximants_wiring(tmp_path):
    assert _run(tmp_path, "approximants", "--alpha", "golden", "--k", "10") == 0
    lines = (tmp_path / "convergents.csv").read_text().splitlines()
    assert lines[0] == "k,p,q" and len(lines) == 11 and lines[-1] == "10,55,89"
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["command"] == "approximants" and man["seed"] == 12345
    assert {"numpy", "scipy", "mpmath"} <= set(man["versions"]) and man["wall_time_s"] >= 0


def test_exit_codes(tmp_path):
    assert _run(tmp_path, "setup", "--n", "4", "--An", "10", "--check") == 0
    assert _run(tmp_path, "nonsense") == 1
    assert _run(tmp_path, "setup", "--n", "four") == 1
    assert _run(tmp_path, "setup", "--alpha", "platinum") == 1
    assert _run(tmp_path, "cycle", "--p", "1", "--q", "1") == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("n = 4\nAN = 10\n")
    assert _run(tmp_path, "setup", "--config", str(cfg)) == 1


def test_failed_check_writes_nothing(tmp_path):
    out = tmp_path / "o"
    code = _run(out, "density", "--n-values", "3 4", "--samples", "2000", "--check")
    assert code == 3
    assert not out.exists()


def test_config_and_manifest_round_trip(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("n_values = 3, 4\nsamples = 3000\nseed = 5\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(a, "density", "--config", str(cfg)) == 0
    assert _run(b, "density", "--manifest", str(a / "manifest.json")) == 0
    assert (a / "density.csv").read_bytes() == (b / "density.csv").read_bytes()
    # flags override the config file
    c = tmp_path / "c"
    assert _run(c, "density", "--config", str(cfg), "--seed", "6") == 0
    assert (c / "density.csv").read_bytes() != (a / "density.csv").read_bytes()
    assert _run(c, "setup", "--manifest", str(a / "manifest.json")) == 1


def _render(tmp_path, bits, meta=None):
    m = tmp_path / "in.mask"
    m.write_bytes(mask_bytes(bits, meta or {}))
    assert _run(tmp_path, "render", "--mask", str(m)) == 0
    return read_ppm(tmp_path / "render.ppm")


def test_render_empty_and_full(tmp_path):
    assert not _render(tmp_path, np.zeros((8, 5), bool)).any()
    assert (_render(tmp_path, np.ones((8, 5), bool)) == 255).all()
    bad = tmp_path / "bad.mask"
    bad.write_bytes(b"{}\n")
    assert _run(tmp_path, "render", "--mask", str(bad)) == 1
    assert _run(tmp_path, "render") == 1


def test_render_counts_golden_mask(tmp_path):
    qmap = QuadraticMap(eval_to_precision(preset("golden"), 128).value, 128)
    m = siegel_mask(qmap, RegionId("Disk", (2.0,)), 0j, (0.8, 0.8), (128, 128), 1000, recurrence_tol=0.025)
    img = _render(tmp_path, m.bits, m.meta_json())
    assert int((img[..., 0] == 255).sum()) == int(m.bits.sum())
    side = (tmp_path / "render.txt").read_text()
    assert f"inside_pixels = {int(m.bits.sum())}" in side and "half = [0.8, 0.8]" in side
