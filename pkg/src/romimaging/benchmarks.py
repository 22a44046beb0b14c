"""Desk-scale experiments shared by the acceptance suite and the demos.

Each builder returns a small namespace with the true model, the kinematic
model(s), the array, the wavelet, the substep count and the clean data, so
callers only decide what to image and how to score it.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .harness import evaluation_window, map_mask_to_kinematic, spurious_ratio
from .imaging import backprojection_image, depth_scale, kinematic_basis, rtm_image
from .media import Grid2D, TransducerArray, WaveletSpec, constant_velocity
from .phantoms import gradient_background, make_phantom
from .propagate import simulate_data

H = 10.0
TAU = 0.015


@dataclasses.dataclass(frozen=True, eq=False)
class Case:
    model: object
    mask: np.ndarray
    kinematic: dict
    array: object
    wavelet: object
    substeps: int
    data: object

    @property
    def grid(self):
        return self.model.grid


def point_case(location=(25, 30), contrast=0.1, radius=1, nx=60, m=8, n2=32):
    """Small inclusion in a 2.0-2.5 km/s gradient; kinematic model = the background."""
    grid = Grid2D(nx, nx, H)
    params = dict(location=location, contrast=contrast, radius=radius, c_top=2000.0, c_bottom=2500.0)
    model, mask = make_phantom("point", grid, return_mask=True, **params)
    background = model.with_velocity(gradient_background(grid, 2000.0, 2500.0))
    array = TransducerArray.along_edge(grid, m)
    wavelet = WaveletSpec.from_tau(TAU, n2)
    data = simulate_data(model, array, wavelet)
    return Case(model, mask, {"background": background}, array, wavelet, data.meta["substeps"], data)


def two_reflector_case(n=120, m=16, n2=48, margin=6, **phantom):
    """Slanted and branching slow reflectors in a 2-3 km/s gradient.

    Kinematic models: the reflector-free gradient and a constant 2.5 km/s.
    Transducers span the top edge, ``margin`` nodes clear of the corners.
    """
    grid = Grid2D(n, n, H)
    model, mask = make_phantom("two_reflectors", grid, return_mask=True, **phantom)
    smooth = model.with_velocity(gradient_background(grid, phantom.get("c_top", 2000.0), phantom.get("c_bottom", 3000.0)))
    const = constant_velocity(model, 2500.0)
    array = TransducerArray.along_edge(grid, m, start=margin, stop=n - 1 - margin)
    wavelet = WaveletSpec.from_tau(TAU, n2)
    data = simulate_data(model, array, wavelet)
    return Case(model, mask, {"smooth": smooth, "constant": const}, array, wavelet, data.meta["substeps"], data)


def suppression_scores(case, kinematic_name, data=None):
    """Spurious-to-weakest-reflector ratios of depth-scaled BP and RTM images.

    The reflector mask is moved to its kinematic travel-time depth; spurious
    events are counted in :func:`romimaging.harness.evaluation_window`,
    farther than one wavelet width from the mapped reflectors.

    Returns
    -------
    dict
        ``{"BP": (ratio, node), "RTM": (ratio, node), "images": {...}}``
    """
    D = case.data if data is None else data
    c_o = case.kinematic[kinematic_name]
    s = case.substeps
    kin = kinematic_basis(c_o, case.array, case.wavelet, s)
    images = {
        "BP": depth_scale(backprojection_image(D, c_o, case.array, case.wavelet, s, kinematic=kin), case.array),
        "RTM": depth_scale(rtm_image(D, c_o, case.array, case.wavelet, s), case.array),
    }
    mapped = map_mask_to_kinematic(case.mask, case.model.c, c_o.c, case.grid.h)
    window, res = evaluation_window(c_o, case.wavelet, case.array)
    out = {"images": images, "mapped_mask": mapped}
    for name, img in images.items():
        ratio, node, _ = spurious_ratio(img.values, mapped, window, margin=res)
        out[name] = (ratio, node)
    return out
