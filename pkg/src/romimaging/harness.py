"""Experiment driver: configuration, pipeline orchestration, persistence and reports.

A configuration is a JSON-compatible nested dict wrapped in
:class:`ExperimentConfig`.  :func:`run` executes

    simulate -> [noise] -> [regularize] -> reduce -> images -> manifest

and writes every intermediate into one output directory.  The reduce stage
reads the data back from the ROMD file so it provably sees nothing else.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import logging
import platform
import time
from pathlib import Path

import numpy as np
import scipy
from scipy import ndimage

from . import __version__
from . import io as rio
from .errors import RomImagingError, ValidationError
from .imaging import (
    Image,
    SubArrayPartition,
    backprojection_image,
    composite_image,
    depth_scale,
    kinematic_basis,
    rtm_image,
)
from .media import (
    Grid2D,
    TransducerArray,
    WaveletSpec,
    constant_velocity,
    gaussian_smooth_velocity,
)
from .phantoms import gradient_background, make_phantom
from .propagate import STABILITY_TARGET, simulate
from .regularization import MuSchedule, NoiseSpec, add_noise, regularize
from .rom import EPS_PD, assemble_mass, reduce, verify_structure

logger = logging.getLogger(__name__)

#: every tolerance the pipeline uses, with its default; the exponential
#: remainder and the stability target are fixed and recorded for provenance
TOLERANCES = {
    "data_symmetry": 1e-12,
    "expm_remainder": 1e-12,
    "eps_pd": EPS_PD,
    "regularization_delta": 1e-12,
    "structure": 1e-8,
    "stability_target": STABILITY_TARGET,
}

DEFAULT_CONFIG = {
    "grid": {"nx": 60, "ny": 60, "h": 10.0, "origin": [0.0, 0.0]},
    "model": {"kind": "two_reflectors", "params": {}},
    "array": {"m": 8, "edge": "top", "start": None, "stop": None},
    "wavelet": {"tau": 0.015, "n2": 32, "sigma": None},
    "substeps": None,
    "kinematic": {"kind": "background"},
    "noise": None,
    "regularization": {"enabled": False, "start": 1.0, "factor": 1.05, "cap": 100.0},
    "imaging": {"methods": ["bp"], "convention": "spd_sqrt", "depth_scale": {"a0": 1.0, "a1": None}},
    "partition": None,
    "seed": 0,
    "tolerances": dict(TOLERANCES),
}

PRESETS = {
    # two extended reflectors in a 2-3 km/s gradient, 32 transducers on the top edge
    "two_reflectors_full": {
        "grid": {"nx": 300, "ny": 300, "h": 10.0},
        "model": {"kind": "two_reflectors", "params": {}},
        "array": {"m": 32},
        "wavelet": {"tau": 1.5e-2, "n2": 130},
        "kinematic": {"kind": "background"},
        "imaging": {"methods": ["bp", "rtm"]},
    },
    # layered stand-in for a Marmousi-type section (supply a velocity file for the real model)
    "marmousi_style": {
        "grid": {"nx": 1131, "ny": 300, "h": 10.0},
        "model": {"kind": "layered", "params": {"interfaces": [0.2, 0.45, 0.7], "velocities": [1500.0, 2000.0, 2800.0, 3600.0]}},
        "array": {"m": 102, "start": 5, "stop": 1116},
        "wavelet": {"tau": 1.8e-2, "n2": 130},
        "kinematic": {"kind": "smooth", "width_x": 400.0, "width_y": 280.0},
        "partition": {"uniform": {"count": 5, "size": 34}},
        "imaging": {"methods": ["composite"]},
    },
    # breast-like phantom surrounded by 192 transducers
    "ultrasound_style": {
        "grid": {"nx": 400, "ny": 400, "h": 5e-4},
        "model": {"kind": "circular_phantom", "params": {}},
        "array": {"m": 192, "edge": "perimeter"},
        "wavelet": {"tau": 8.6e-7, "n2": 80},
        "kinematic": {"kind": "constant", "value": 1500.0},
        "partition": {"uniform": {"count": 16, "size": 24}},
        "imaging": {"methods": ["composite"]},
    },
}


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; ``settings`` is the full merged dict."""

    settings: dict

    @classmethod
    def from_dict(cls, d):
        settings = _merge(DEFAULT_CONFIG, d)
        cfg = cls(settings)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(d)

    @classmethod
    def preset(cls, name, **override):
        if name not in PRESETS:
            raise ValidationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls.from_dict(_merge(PRESETS[name], override))

    def validate(self):
        s = self.settings
        w = s["wavelet"]
        if not (w["tau"] and w["tau"] > 0) or int(w["n2"]) < 4 or int(w["n2"]) % 2:
            raise ValidationError("wavelet needs tau > 0 and an even n2 >= 4")
        model = s["model"]
        if "file" in model and not Path(model["file"]).exists():
            raise ValidationError(f"velocity file {model['file']} does not exist")
        kin = s["kinematic"]
        if kin.get("kind") == "file" and not Path(kin.get("file", "")).exists():
            raise ValidationError(f"kinematic velocity file {kin.get('file')} does not exist")
        methods = s["imaging"]["methods"]
        unknown = set(methods) - {"bp", "rtm", "composite"}
        if unknown:
            raise ValidationError(f"unknown imaging methods {sorted(unknown)}")
        if "composite" in methods and not s.get("partition"):
            raise ValidationError("composite imaging needs a partition")

    def to_json(self):
        return json.dumps(self.settings, indent=2, sort_keys=True)

    def digest(self):
        return hashlib.sha256(json.dumps(self.settings, sort_keys=True).encode()).hexdigest()[:16]

    # -- builders ---------------------------------------------------------

    def grid(self):
        g = self.settings["grid"]
        return Grid2D(g["nx"], g["ny"], g["h"], tuple(g.get("origin", (0.0, 0.0))))

    def model(self, return_mask=False):
        spec = self.settings["model"]
        if "file" in spec:
            model = rio.read_velocity_model(spec["file"])
            mask = np.zeros(model.grid.shape, dtype=bool)
        else:
            model, mask = make_phantom(
                spec["kind"], self.grid(), boundary=spec.get("boundary"), return_mask=True, **spec.get("params", {})
            )
        return (model, mask) if return_mask else model

    def array(self, grid):
        a = self.settings["array"]
        if a.get("edge") == "perimeter":
            return TransducerArray.perimeter(grid, a["m"])
        return TransducerArray.along_edge(grid, a["m"], a.get("edge", "top"), a.get("start"), a.get("stop"))

    def wavelet(self):
        w = self.settings["wavelet"]
        if w.get("sigma") is None:
            return WaveletSpec.from_tau(w["tau"], w["n2"])
        return WaveletSpec(w["sigma"], w["tau"], w["n2"])

    def kinematic(self, model):
        return kinematic_model(model, self.settings["kinematic"], self.settings["model"])

    def partition(self, m):
        p = self.settings.get("partition")
        if not p:
            return None
        if "uniform" in p:
            part = SubArrayPartition.uniform(m, p["uniform"]["count"], p["uniform"]["size"])
            if p.get("weights"):
                part = SubArrayPartition(part.ranges, p["weights"])
            return part
        return SubArrayPartition(tuple(tuple(r) for r in p["ranges"]), p.get("weights"))


def kinematic_model(model, spec, model_spec=None):
    """Kinematic velocity ``c_o`` described by ``spec`` (``kind`` plus parameters).

    ``background`` rebuilds a phantom's smooth gradient without reflectors,
    ``constant`` and ``smooth`` (Gaussian widths in meters) act on ``model``,
    ``file`` loads a velocity file.
    """
    kind = spec.get("kind", "background")
    if kind == "constant":
        return constant_velocity(model, spec.get("value", float(np.mean(model.c))))
    if kind == "smooth":
        return gaussian_smooth_velocity(model, spec["width_x"], spec["width_y"])
    if kind == "file":
        c_o = rio.read_velocity_model(spec["file"])
        if c_o.grid != model.grid:
            raise ValidationError("kinematic model grid differs from the true model grid")
        return model.with_velocity(c_o.c)
    if kind == "background":
        params = (model_spec or {}).get("params", {})
        mkind = (model_spec or {}).get("kind")
        if mkind == "two_reflectors":
            return model.with_velocity(
                gradient_background(model.grid, params.get("c_top", 2000.0), params.get("c_bottom", 3000.0))
            )
        if mkind == "point":
            c_top = params.get("c_top", 2000.0)
            c_bot = params.get("c_bottom") or c_top
            return model.with_velocity(gradient_background(model.grid, c_top, c_bot))
        raise ValidationError(f"no reflector-free background known for model kind {mkind!r}")
    raise ValidationError(f"unknown kinematic model kind {kind!r}")


# -- reports -----------------------------------------------------------------


def report_condition(D, n_list):
    """Condition numbers of the leading ``m n' x m n'`` mass matrices.

    Returns a list of ``(n', cond)`` rows; :func:`condition_csv` formats it.
    """
    rows = []
    for n in n_list:
        n = int(n)
        if not 1 <= n <= D.n:
            raise ValidationError(f"n'={n} outside [1, {D.n}]")
        M = assemble_mass(D.D[: 2 * n], n)
        w = np.linalg.eigvalsh(M)
        cond = float(np.abs(w).max() / np.abs(w).min()) if np.abs(w).min() > 0 else float("inf")
        rows.append((n, cond))
    return rows


def condition_csv(rows):
    return "n,cond\n" + "".join(f"{n},{float(c)!r}\n" for n, c in rows)


def map_mask_to_kinematic(mask, c, c_o, h):
    """Move reflector nodes to the depth with the same vertical travel time in ``c_o``.

    With a wrong kinematic model reflectors image where the kinematic
    travel time matches the true one; this gives the expected image mask.
    """
    tt = np.cumsum(h / c, axis=0) - h / c[:1]
    tto = np.cumsum(h / c_o, axis=0) - h / c_o[:1]
    out = np.zeros_like(mask, dtype=bool)
    for iy, ix in zip(*np.nonzero(mask)):
        out[int(np.argmin(np.abs(tto[:, ix] - tt[iy, ix]))), ix] = True
    return out


def evaluation_window(c_o, wavelet, array):
    """Nodes where spurious events are counted, plus the resolution length in cells.

    Excluded: the near-field band (two wavelet widths below the array), nodes
    whose two-way vertical travel time exceeds the record, and columns
    within one wavelet width of the ends of the aperture.
    """
    g = c_o.grid
    c = c_o.c
    res = int(np.ceil(c.max() * wavelet.sigma / g.h))
    top = 2 * int(np.ceil(c[0].max() * wavelet.sigma / g.h))
    reach = 2.0 * np.cumsum(g.h / c, axis=0) <= wavelet.terminal_time
    window = reach.copy()
    window[:top] = False
    cols = array.positions[:, 1]
    lo, hi = cols.min() + res, cols.max() - res
    window[:, :lo] = False
    window[:, hi + 1 :] = False
    return window, res


def spurious_ratio(values, mask, window=None, margin=3):
    """Largest ``|I|`` away from the reflectors over the weakest reflector peak.

    Each connected component of ``mask`` is a reflector; its peak is the
    largest ``|I|`` within two cells.  Spurious nodes are those of
    ``window`` (default: everywhere) farther than ``margin`` cells from the
    mask (Chebyshev distance).

    Returns
    -------
    ratio : float
    spurious_at : tuple
        Node of the largest spurious value.
    peaks : list of float
    """
    v = np.abs(np.asarray(values, dtype=float))
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValidationError("ground-truth mask is empty")
    square = np.ones((3, 3), dtype=bool)
    labels, count = ndimage.label(ndimage.binary_dilation(mask, square))
    peaks = [float(v[ndimage.binary_dilation(labels == i, square)].max()) for i in range(1, count + 1)]
    near = ndimage.binary_dilation(mask, square, iterations=margin) if margin > 0 else mask
    region = ~near if window is None else (window & ~near)
    if not region.any():
        return 0.0, None, peaks
    masked = np.where(region, v, -1.0)
    at = np.unravel_index(np.argmax(masked), v.shape)
    true_peak = min(peaks)
    ratio = float(v[at] / true_peak) if true_peak > 0 else float("inf")
    return ratio, tuple(int(i) for i in at), peaks


@dataclasses.dataclass(frozen=True)
class ImageComparison:
    peak_a: tuple
    peak_b: tuple
    correlation: float
    zero_image: bool
    ratio_a: float = None
    ratio_b: float = None

    def to_dict(self):
        return dataclasses.asdict(self)


def compare_images(a, b, mask=None, window=None, margin=3):
    """Peak locations, normalized cross-correlation and (with a mask) spurious ratios.

    A zero image makes the correlation undefined; it is reported as 0 with
    ``zero_image=True``.
    """
    va = a.values if isinstance(a, Image) else np.asarray(a, dtype=float)
    vb = b.values if isinstance(b, Image) else np.asarray(b, dtype=float)
    if va.shape != vb.shape or (
        isinstance(a, Image) and isinstance(b, Image) and a.grid != b.grid
    ):
        raise ValidationError("images live on different grids")
    peak_a = tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(va)), va.shape))
    peak_b = tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(vb)), vb.shape))
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    zero = bool(na == 0 or nb == 0)
    corr = 0.0 if zero else float(np.sum(va * vb) / (na * nb))
    ra = rb = None
    if mask is not None:
        ra = spurious_ratio(va, mask, window, margin)[0]
        rb = spurious_ratio(vb, mask, window, margin)[0]
    return ImageComparison(peak_a, peak_b, corr, zero, ra, rb)


# -- pipeline ----------------------------------------------------------------


def _versions():
    return {"romimaging": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def run(config, outdir):
    """Execute the configured stages and write all artifacts into ``outdir``.

    Returns the manifest dict.  A failing stage is recorded in the manifest
    (``failed_stage``, ``error``) before the exception propagates.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    s = config.settings
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_hash": config.digest(),
        "config": s,
        "versions": _versions(),
        "tolerances": dict(TOLERANCES, **s.get("tolerances", {})),
        "timings": {},
        "artifacts": {},
        "status": "running",
    }
    tol = manifest["tolerances"]
    stage = "setup"

    def timed(name):
        nonlocal stage
        stage = name
        return _Timer(manifest["timings"], name)

    try:
        with timed("setup"):
            model, mask = config.model(return_mask=True)
            grid = model.grid
            array = config.array(grid)
            array.validate_on(model)
            wavelet = config.wavelet()
            c_o = config.kinematic(model)
            np.save(out / "reflector_mask.npy", mask)
            rio.write_velocity_model(out / "model.vel", model)
            rio.write_velocity_model(out / "kinematic.vel", c_o)
        with timed("simulate"):
            D = simulate(model, array, wavelet, s["substeps"], sym_tol=tol["data_symmetry"])[0]
            substeps = D.meta["substeps"]
            rio.write_romd(out / "data_clean.romd", D)
            manifest["substeps"] = substeps
        data_file = out / "data_clean.romd"
        if s.get("noise"):
            with timed("noise"):
                spec = NoiseSpec(s["noise"]["epsilon"], s["noise"].get("seed", s["seed"]))
                Dn = add_noise(D, spec)
                data_file = out / "data_noisy.romd"
                rio.write_romd(data_file, Dn)
        mu = 1.0
        if s["regularization"].get("enabled"):
            with timed("regularize"):
                r = s["regularization"]
                sched = MuSchedule(r["start"], r["factor"], r["cap"], tol["regularization_delta"])
                res = regularize(rio.read_romd(data_file, "noisy"), sched)
                mu = res.mu
                data_file = out / "data_regularized.romd"
                rio.write_romd(data_file, res.data)
                (out / "mu_history.csv").write_text(res.history_csv())
        manifest["mu"] = mu
        with timed("reduce"):
            # the ROM sees the data file and nothing else
            Dr = rio.read_romd(data_file).replace(meta={"mu": mu})
            convention = s["imaging"]["convention"]
            rm = reduce(Dr, convention, eps_pd=tol["eps_pd"])
            rio.write_romp(out / "rom.romp", rm)
            report = verify_structure(rm, tol["structure"])
            (out / "structure.txt").write_text(report.to_text())
            manifest["structure"] = dataclasses.asdict(report)
        ds = s["imaging"].get("depth_scale") or {}
        methods = s["imaging"]["methods"]
        kin = None
        if "bp" in methods:
            with timed("image-bp"):
                kin = kinematic_basis(c_o, array, wavelet, substeps, convention)
                img = backprojection_image(Dr, c_o, array, wavelet, substeps, convention, kinematic=kin, rom=rm)
                _save_image(out, "bp", depth_scale(img, array, ds.get("a0", 1.0), ds.get("a1")), manifest)
        if "rtm" in methods:
            with timed("image-rtm"):
                img = rtm_image(Dr, c_o, array, wavelet, substeps)
                _save_image(out, "rtm", depth_scale(img, array, ds.get("a0", 1.0), ds.get("a1")), manifest)
        if "composite" in methods:
            with timed("image-composite"):
                part = config.partition(array.m)
                img = composite_image(Dr, part, c_o, array, wavelet, substeps, convention, on_failure="skip")
                _save_image(out, "composite", depth_scale(img, array, ds.get("a0", 1.0), ds.get("a1")), manifest)
                manifest["composite"] = {"used": img.meta["used"], "failed": img.meta["failed"]}
        manifest["status"] = "ok"
    except RomImagingError as exc:
        manifest["status"] = "failed"
        manifest["failed_stage"] = stage
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        rio.write_json(out / "manifest.json", manifest)
        raise
    rio.write_json(out / "manifest.json", manifest)
    return manifest


def _save_image(out, name, img, manifest):
    rio.write_image_csv(out / f"image_{name}.csv", img.values)
    rio.write_pgm(out / f"image_{name}.pgm", img.values)
    manifest["artifacts"][f"image_{name}"] = {"meta": {k: v for k, v in img.meta.items() if _jsonable(v)}}


def _jsonable(v):
    try:
        json.dumps(v, default=rio._json_default)
        return True
    except TypeError:
        return False


class _Timer:
    def __init__(self, sink, name):
        self.sink, self.name = sink, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.sink[self.name] = time.perf_counter() - self.t0
        return False


__all__ = [
    "ExperimentConfig",
    "ImageComparison",
    "PRESETS",
    "TOLERANCES",
    "compare_images",
    "condition_csv",
    "evaluation_window",
    "kinematic_model",
    "map_mask_to_kinematic",
    "report_condition",
    "run",
    "spurious_ratio",
]
