import numpy as np
import pytest

from romimaging import Grid2D, SampledData, ValidationError, VelocityModel, reduce
from romimaging import io as rio


@pytest.fixture
def model():
    grid = Grid2D(6, 4, 2.5, (10.0, -5.0))
    c = 1500.0 + np.random.default_rng(0).random(grid.shape) * 1000.0
    return VelocityModel(grid, c, {"bottom": "accessible"})


@pytest.mark.parametrize("fmt", ["csv", "f64le"])
def test_velocity_round_trip(tmp_path, model, fmt):
    path = tmp_path / "m.vel"
    rio.write_velocity_model(path, model, fmt)
    back = rio.read_velocity_model(path)
    assert back.grid == model.grid
    assert np.array_equal(back.c, model.c)
    assert back.boundary == model.boundary


def test_velocity_km_per_s(tmp_path):
    path = tmp_path / "k.vel"
    path.write_text("nx=3\nny=3\nh=10\nunit=km/s\nEND\n" + "2,2,2\n" * 3)
    assert rio.read_velocity_model(path).c.max() == 2000.0


@pytest.mark.parametrize(
    "text",
    ["nx=3\nny=3\nh=1\n2,2,2\n", "nx=3\nny=3\nEND\n1,1,1\n", "nx=3\nny=3\nh=1\nEND\n1,1\n", "nx=3\nny=3\nh=1\nformat=xml\nEND\n"],
)
def test_velocity_malformed(tmp_path, text):
    path = tmp_path / "bad.vel"
    path.write_text(text)
    with pytest.raises(ValidationError):
        rio.read_velocity_model(path)


def test_velocity_bad_format(tmp_path, model):
    with pytest.raises(ValidationError):
        rio.write_velocity_model(tmp_path / "x", model, "png")


def _data():
    # D^k = b^T T_k(P) b for a random symmetric P with spectrum in (-1, 1)
    rng = np.random.default_rng(2)
    Q, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    theta = rng.uniform(0.1, 3.0, 12)
    b = rng.standard_normal((12, 3))
    D = np.stack([b.T @ (Q * np.cos(k * theta)) @ Q.T @ b for k in range(6)])
    return SampledData(0.5 * (D + D.transpose(0, 2, 1)), 0.015)


def test_romd_round_trip(tmp_path):
    D = _data()
    rio.write_romd(tmp_path / "d.romd", D)
    back = rio.read_romd(tmp_path / "d.romd")
    assert np.array_equal(back.D, D.D) and back.tau == D.tau
    raw = (tmp_path / "d.romd").read_bytes()
    assert raw[:4] == b"ROMD" and len(raw) == 4 + 12 + 8 + 6 * 9 * 8


def test_romd_corrupt(tmp_path):
    D = _data()
    path = tmp_path / "d.romd"
    rio.write_romd(path, D)
    raw = path.read_bytes()
    for bad in (b"XXXX" + raw[4:], raw[:-8], raw[:10]):
        path.write_bytes(bad)
        with pytest.raises(ValidationError):
            rio.read_romd(path)


def test_romp_round_trip(tmp_path):
    rm = reduce(_data())
    rio.write_romp(tmp_path / "r.romp", rm)
    back = rio.read_romp(tmp_path / "r.romp")
    assert np.array_equal(back.P, rm.P) and np.array_equal(back.B, rm.B)
    assert (back.m, back.n, back.mu) == (rm.m, rm.n, rm.mu)
    (tmp_path / "x.romp").write_bytes(b"ROMD" + (tmp_path / "r.romp").read_bytes()[4:])
    with pytest.raises(ValidationError):
        rio.read_romp(tmp_path / "x.romp")


def test_data_csv(tmp_path):
    D = _data()
    rio.data_to_csv(tmp_path / "d.csv", D)
    rows = np.loadtxt(tmp_path / "d.csv", delimiter=",", skiprows=1)
    assert rows.shape == (6 * 9, 4)
    k, i, j = rows[7, :3].astype(int)
    assert rows[7, 3] == D.D[k, i, j]


def test_image_csv_round_trip(tmp_path):
    v = np.random.default_rng(0).standard_normal((5, 7)) * 1e-9
    rio.write_image_csv(tmp_path / "i.csv", v)
    assert np.array_equal(rio.read_image_csv(tmp_path / "i.csv"), v)


def test_pgm_round_trip(tmp_path):
    v = np.random.default_rng(0).standard_normal((5, 7))
    rio.write_pgm(tmp_path / "i.pgm", v)
    pix, offset, scale = rio.read_pgm(tmp_path / "i.pgm")
    assert pix.shape == (5, 7) and pix.max() == 65535 and pix.min() == 0
    np.testing.assert_allclose(offset + scale * pix, v, atol=scale)


def test_pgm_constant_image(tmp_path):
    rio.write_pgm(tmp_path / "z.pgm", np.zeros((3, 3)))
    pix, offset, scale = rio.read_pgm(tmp_path / "z.pgm")
    assert scale == 0.0 and not pix.any()


def test_json_numpy(tmp_path):
    import json

    rio.write_json(tmp_path / "a.json", {"x": np.float64(1.5), "y": np.arange(3), "z": np.bool_(True)})
    assert json.loads((tmp_path / "a.json").read_text()) == {"x": 1.5, "y": [0, 1, 2], "z": True}
