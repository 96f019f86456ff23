"""Elementary image relations with bounded parameters and their composition.

All six kinds preserve image shape and clamp output to [0, 1]. Geometric ops
use bilinear sampling with a constant-zero border about the image center;
translation snaps to whole pixels. Identity parameters return a bit-exact
copy of the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import OutOfBoundsParam

KINDS = ("rotation", "translation", "scale", "shear", "blur", "contrast")

PARAM_COUNT = {
    "rotation": 1,
    "translation": 2,
    "scale": 2,
    "shear": 2,
    "blur": 2,
    "contrast": 1,
}

IDENTITY_PARAMS = {
    "rotation": (0.0,),
    "translation": (0.0, 0.0),
    "scale": (1.0, 1.0),
    "shear": (0.0, 0.0),
    "blur": (0.0, 0.0),
    "contrast": (1.0,),
}

# Per-kind parameter interval, applied to every parameter of the kind.
DEFAULT_BOUNDS: dict[str, tuple[float, float]] = {
    "rotation": (-10.0, 10.0),
    "translation": (-2.0, 2.0),
    "scale": (0.9, 1.1),
    "shear": (-0.1, 0.1),
    "blur": (0.0, 1.5),
    "contrast": (1.0, 2.0),
}

BoundsTable = dict

# hard floors for parameters where only one side of the interval is physical
_BOUND_FLOORS = {"blur": 0.0, "contrast": 1.0}


def expand_bounds(bounds: BoundsTable, factor: float) -> BoundsTable:
    """Widen (or shrink, factor < 1) every interval about its center.

    Blur and contrast keep their one-sided floors (0 and 1) so expansion
    never produces negative sigma or darkening contrast.
    """
    out = {}
    for kind, (lo, hi) in bounds.items():
        center = (lo + hi) / 2.0
        half = (hi - lo) / 2.0 * factor
        lo2, hi2 = center - half, center + half
        if kind in _BOUND_FLOORS:
            lo2 = max(lo2, _BOUND_FLOORS[kind]) if factor <= 1.0 else _BOUND_FLOORS[kind]
        out[kind] = (lo2, hi2)
    return out


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: tuple
    active: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise OutOfBoundsParam(f"unknown transform kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(self.params) != PARAM_COUNT[self.kind]:
            raise OutOfBoundsParam(
                f"{self.kind} takes {PARAM_COUNT[self.kind]} parameter(s), got {len(self.params)}"
            )

    def check_bounds(self, bounds: BoundsTable) -> None:
        lo, hi = bounds[self.kind]
        for p in self.params:
            if not (lo <= p <= hi):
                raise OutOfBoundsParam(f"{self.kind} parameter {p} outside [{lo}, {hi}]")

    def is_identity(self) -> bool:
        if not self.active:
            return True
        ident = IDENTITY_PARAMS[self.kind]
        if self.kind == "translation":
            return all(round(p) == 0 for p in self.params)
        return self.params == ident

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params), "active": self.active}

    @classmethod
    def from_dict(cls, doc: dict) -> "TransformSpec":
        return cls(doc["kind"], tuple(doc["params"]), bool(doc["active"]))


@dataclass
class HmrChain:
    """An ordered composition of transform specs, applied left to right."""

    nodes: list = field(default_factory=list)

    def __post_init__(self):
        if not self.nodes:
            raise OutOfBoundsParam("chain must contain at least one node")

    def is_identity(self) -> bool:
        return all(node.is_identity() for node in self.nodes)

    def to_dict(self) -> dict:
        return {"nodes": [n.to_dict() for n in self.nodes]}

    @classmethod
    def from_dict(cls, doc: dict) -> "HmrChain":
        return cls([TransformSpec.from_dict(n) for n in doc["nodes"]])

    def key(self) -> tuple:
        return tuple((n.kind, n.params, n.active) for n in self.nodes)


def _affine(image: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Apply output = A @ (input - center) + center with bilinear sampling."""
    h, w = image.shape[:2]
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    A = np.where(np.abs(A) < 1e-12, 0.0, A)  # right angles would otherwise sample at -eps
    Minv = np.linalg.inv(A)
    offset = center - Minv @ center
    out = np.empty_like(image)
    for c in range(image.shape[2]):
        out[:, :, c] = ndimage.affine_transform(
            image[:, :, c], Minv, offset=offset, order=1, mode="constant", cval=0.0
        )
    return np.clip(out, 0.0, 1.0)


def _translate(image: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = image.shape[:2]
    out = np.zeros_like(image)
    src_r = slice(max(0, -dy), min(h, h - dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_r = slice(max(0, dy), min(h, h + dy))
    dst_c = slice(max(0, dx), min(w, w + dx))
    if src_r.start < src_r.stop and src_c.start < src_c.stop:
        out[dst_r, dst_c] = image[src_r, src_c]
    return out


def _gauss_kernel(sigma: float) -> np.ndarray:
    hw = math.ceil(3.0 * sigma)
    xs = np.arange(-hw, hw + 1, dtype=np.float64)
    k = np.exp(-(xs**2) / (2.0 * sigma**2))
    return k / k.sum()


def _blur(image: np.ndarray, sx: float, sy: float) -> np.ndarray:
    out = image.astype(np.float64, copy=True)
    if sy > 0:
        out = ndimage.convolve1d(out, _gauss_kernel(sy), axis=0, mode="constant", cval=0.0)
    if sx > 0:
        out = ndimage.convolve1d(out, _gauss_kernel(sx), axis=1, mode="constant", cval=0.0)
    return np.clip(out, 0.0, 1.0)


def apply(spec: TransformSpec, image: np.ndarray, bounds: BoundsTable | None = None) -> np.ndarray:
    """Apply one transform; inactive or identity-parameter specs copy the input."""
    bounds = DEFAULT_BOUNDS if bounds is None else bounds
    spec.check_bounds(bounds)
    image = np.asarray(image, dtype=np.float64)
    if spec.is_identity():
        return image.copy()
    kind, p = spec.kind, spec.params
    if kind == "rotation":
        th = math.radians(p[0])
        A = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        return _affine(image, A)
    if kind == "translation":
        return _translate(image, int(round(p[0])), int(round(p[1])))
    if kind == "scale":
        # params (sx, sy); rows scale by sy, columns by sx
        return _affine(image, np.array([[p[1], 0.0], [0.0, p[0]]]))
    if kind == "shear":
        # x' = x + shx*y, y' = y + shy*x with x = column, y = row
        return _affine(image, np.array([[1.0, p[1]], [p[0], 1.0]]))
    if kind == "blur":
        return _blur(image, p[0], p[1])
    # contrast
    return np.clip(image * p[0], 0.0, 1.0)


def apply_chain(chain: HmrChain, image: np.ndarray, bounds: BoundsTable | None = None) -> np.ndarray:
    """Left-to-right composition of the chain's active nodes."""
    out = np.asarray(image, dtype=np.float64)
    changed = False
    for node in chain.nodes:
        if node.is_identity():
            node.check_bounds(DEFAULT_BOUNDS if bounds is None else bounds)
            continue
        out = apply(node, out, bounds)
        changed = True
    return out if changed else out.copy()


def apply_chain_batch(chain: HmrChain, images: np.ndarray, bounds: BoundsTable | None = None) -> np.ndarray:
    """apply_chain over a (N, H, W, C) stack."""
    return np.stack([apply_chain(chain, img, bounds) for img in images])


def sample_spec(rng, kind: str | None = None, bounds: BoundsTable | None = None) -> TransformSpec:
    """Uniformly sample an active spec: kind uniform over the table (when not
    given), each parameter uniform on its interval.
    """
    bounds = DEFAULT_BOUNDS if bounds is None else bounds
    kinds = sorted(bounds)
    if kind is None:
        kind = kinds[int(rng.integers(len(kinds)))]
    lo, hi = bounds[kind]
    params = tuple(float(rng.uniform(lo, hi)) for _ in range(PARAM_COUNT[kind]))
    return TransformSpec(kind, params, active=True)
