"""Hairstyle edits: smoothing, detail transfer and parameter interpolation."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .codec import GUIDE_COEFFS, StrandBasis, decode, encode, transfer_detail, truncate
from .errors import AlignmentMismatch, DimensionMismatch, InputError
from .hair_io import HairModel
from .scalp import nearest_roots

INTERP_MODES = ("joint", "theta", "beta")
TRANSFER_MODES = ("texel", "index")


def smooth_hair(model: HairModel, basis: StrandBasis, n: int) -> HairModel:
    """Keep only the first ``n`` coefficients of every strand; roots are unchanged."""
    if len(model) == 0:
        return model
    coeffs = truncate(encode(model.points, basis), n)
    return HairModel.from_array(decode(coeffs, basis), model.roots, model.roots_uv, model.head_scale)


def _match_detail(structure: HairModel, detail: HairModel, mode: str) -> np.ndarray:
    """Index into ``detail`` for every strand of ``structure``."""
    if mode == "index":
        if len(structure) != len(detail):
            raise AlignmentMismatch(f"index transfer needs equal counts, got {len(structure)} and {len(detail)}")
        return np.arange(len(structure))
    if mode != "texel":
        raise InputError(f"unknown transfer mode {mode!r}; expected one of {TRANSFER_MODES}")
    if structure.roots_uv is None or detail.roots_uv is None:
        raise AlignmentMismatch("texel transfer needs scalp uv for both models")
    _, owner = nearest_roots(structure.roots_uv, detail.roots_uv)
    return owner


def transfer_style(structure: HairModel, detail: HairModel, basis: StrandBasis,
                   split: int = GUIDE_COEFFS, mode: str = "texel") -> HairModel:
    """Low-order coefficients from ``structure``, high-order ones from ``detail``.

    In texel mode every structure root reads the detail wig at its own scalp
    position (the nearest detail root in uv, i.e. what a detail texture baked
    without a baldness cutoff returns there). Index mode pairs strands by order.
    """
    if len(structure) == 0:
        return structure
    if len(detail) == 0:
        raise AlignmentMismatch("detail model has no strands")
    owner = _match_detail(structure, detail, mode)
    low = encode(structure.points, basis)
    high = encode(detail.points[owner], basis)
    out = decode(transfer_detail(low, high, split), basis)
    return HairModel.from_array(out, structure.roots, structure.roots_uv, structure.head_scale)


def interpolate_params(a, b, t: float, mode: str = "joint"):
    """Linear blend of (theta, beta) pairs; blocks not selected by ``mode`` come from ``a``."""
    if mode not in INTERP_MODES:
        raise InputError(f"unknown interpolation mode {mode!r}; expected one of {INTERP_MODES}")
    if not 0.0 <= t <= 1.0:
        raise InputError(f"t={t} outside [0, 1]")
    (ta, ba), (tb, bb) = a, b
    ta, ba, tb, bb = (np.asarray(x, dtype=np.float64) for x in (ta, ba, tb, bb))
    if ta.shape != tb.shape or ba.shape != bb.shape:
        raise DimensionMismatch(f"theta {ta.shape}/{tb.shape}, beta {ba.shape}/{bb.shape}")

    def lerp(x, y):
        if t == 0.0:
            return x.copy()
        if t == 1.0:
            return y.copy()
        return (1.0 - t) * x + t * y

    theta = lerp(ta, tb) if mode in ("joint", "theta") else ta.copy()
    beta = lerp(ba, bb) if mode in ("joint", "beta") else ba.copy()
    return theta, beta


@dataclass
class EditRecipe:
    """A replayable edit, stored as plain ``key=value`` lines."""

    operation: str
    split: int = GUIDE_COEFFS
    t: float = 0.5
    mode: str = ""
    sources: list = field(default_factory=list)

    def __post_init__(self):
        if self.operation not in ("smooth", "transfer", "interp"):
            raise InputError(f"unknown operation {self.operation!r}")
        if not 0 <= self.split <= 64:
            raise InputError(f"split {self.split} outside [0, 64]")
        if not 0.0 <= self.t <= 1.0:
            raise InputError(f"t={self.t} outside [0, 1]")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "sources":
                v = ",".join(map(str, v))
            elif f.name == "t":
                v = repr(float(v))
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EditRecipe":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"malformed recipe line {line!r}")
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
        if "operation" not in kv:
            raise InputError("recipe has no operation")
        return cls(
            operation=kv["operation"],
            split=int(kv.get("split", GUIDE_COEFFS)),
            t=float(kv.get("t", 0.5)),
            mode=kv.get("mode", ""),
            sources=[s for s in kv.get("sources", "").split(",") if s],
        )
