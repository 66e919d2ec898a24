"""Increasing quasisymmetric homeomorphisms of the line.

Three map kinds are provided: the identity, the odd power map
x -> sign(x)|x|^a, and piecewise-linear maps obtained by recursive dyadic
mass splitting with bounded left/right ratios.  Each map can carry a claimed
distortion gauge eta; ratio and distortion checks falsify the claim on
samples, they never prove it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from confdim.cantor import IntervalLevel


@dataclass(frozen=True)
class EtaModulus:
    """Distortion gauge eta(t): increasing with eta(0+) = 0.

    kind 'identity': eta(t) = t.
    kind 'power':    eta(t) = C * max(t^K, t^(1/K)), C > 0, K >= 1.
    kind 'tabulated': log-log interpolation of (t, eta) samples.
    """

    kind: str = "identity"
    C: float = 1.0
    K: float = 1.0
    ts: Optional[tuple] = None
    etas: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("identity", "power", "tabulated"):
            raise ValueError(f"unknown eta kind {self.kind!r}")
        if self.kind == "power":
            if self.C <= 0 or self.K < 1:
                raise ValueError("power eta needs C > 0 and K >= 1")
        if self.kind == "tabulated":
            ts = np.asarray(self.ts, dtype=float)
            etas = np.asarray(self.etas, dtype=float)
            if len(ts) < 2 or np.any(np.diff(ts) <= 0) or np.any(np.diff(etas) < 0):
                raise ValueError("tabulated eta needs increasing samples")
            if np.any(ts <= 0) or np.any(etas <= 0):
                raise ValueError("tabulated eta samples must be positive")

    @classmethod
    def identity(cls) -> "EtaModulus":
        return cls(kind="identity")

    @classmethod
    def power(cls, C: float, K: float) -> "EtaModulus":
        return cls(kind="power", C=C, K=K)

    @classmethod
    def tabulated(cls, ts, etas) -> "EtaModulus":
        return cls(kind="tabulated", ts=tuple(ts), etas=tuple(etas))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "identity":
            out = t
        elif self.kind == "power":
            out = self.C * np.maximum(t ** self.K, t ** (1.0 / self.K))
        else:
            # extrapolate log-log linearly beyond the table
            ts = np.asarray(self.ts)
            etas = np.asarray(self.etas)
            out = np.exp(
                np.interp(np.log(np.maximum(t, 1e-300)), np.log(ts), np.log(etas))
            )
            lo, hi = ts[0], ts[-1]
            out = np.where(t < lo, etas[0] * t / lo, out)
            out = np.where(t > hi, etas[-1] * t / hi, out)
        return float(out) if out.ndim == 0 else out


def _dyadic_profile(ratios: list) -> np.ndarray:
    """Image values at the dyadic points of depth len(ratios).

    ratios[k] has 2^k left/right mass ratios; the left child of a node with
    ratio w receives fraction w/(1+w) of the node's image length.
    """
    ys = np.array([0.0, 1.0])
    for level in ratios:
        w = np.asarray(level, dtype=float)
        if np.any(w <= 0):
            raise ValueError("dyadic ratios must be positive")
        share = w / (1.0 + w)
        mids = ys[:-1] + share * np.diff(ys)
        out = np.empty(2 * len(ys) - 1)
        out[0::2] = ys
        out[1::2] = mids
        ys = out
    return ys


class QsMap:
    """Strictly increasing map of the line with an optional claimed eta."""

    def __init__(self, kind: str, a: float = 1.0, ratios=None,
                 eta: Optional[EtaModulus] = None):
        self.kind = kind
        self.a = a
        self.ratios = ratios
        self.eta = eta
        if kind == "dyadic_weight":
            self._ys = _dyadic_profile(ratios)
            self._xs = np.linspace(0.0, 1.0, len(self._ys))
        elif kind == "power":
            if a <= 0:
                raise ValueError("power exponent must be positive")
        elif kind != "identity":
            raise ValueError(f"unknown map kind {kind!r}")

    @classmethod
    def identity(cls) -> "QsMap":
        return cls("identity", eta=EtaModulus.identity())

    @classmethod
    def power(cls, a: float, eta: Optional[EtaModulus] = None) -> "QsMap":
        return cls("power", a=a, eta=eta)

    @classmethod
    def dyadic_weight(cls, ratios=None, rho: float = 2.0, depth: int = 8,
                      seed: int = 0, eta: Optional[EtaModulus] = None) -> "QsMap":
        """Dyadic mass-splitting map on [0,1].

        With explicit ``ratios`` (one array of 2^k values per level k) those
        are used directly; otherwise deterministic ratios in [1/rho, rho] are
        drawn from ``seed``.
        """
        if ratios is None:
            if rho < 1:
                raise ValueError("rho must be >= 1")
            rng = np.random.default_rng(seed)
            ratios = [
                np.exp(rng.uniform(-math.log(rho), math.log(rho), size=2 ** k))
                for k in range(depth)
            ]
        return cls("dyadic_weight", ratios=ratios, eta=eta)

    @property
    def domain(self):
        if self.kind == "dyadic_weight":
            return (0.0, 1.0)
        return (-math.inf, math.inf)

    def _check_domain(self, x: np.ndarray):
        lo, hi = self.domain
        if np.any(x < lo) or np.any(x > hi):
            raise ValueError(f"point outside map domain [{lo}, {hi}]")

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        if self.kind == "identity":
            out = x
        elif self.kind == "power":
            out = np.sign(x) * np.abs(x) ** self.a
        else:
            out = np.interp(x, self._xs, self._ys)
        return float(out) if out.ndim == 0 else out

    def apply_inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "identity":
            out = y
        elif self.kind == "power":
            out = np.sign(y) * np.abs(y) ** (1.0 / self.a)
        else:
            out = np.interp(y, self._ys, self._xs)
        return float(out) if out.ndim == 0 else out

    def __call__(self, x):
        return self.apply(x)


@dataclass
class QsRatioReport:
    max_violation_ratio: float
    t_bins: np.ndarray
    empirical_eta: np.ndarray  # nan where a bin saw no triple


def random_triples(lo: float, hi: float, n: int, seed: int = 0) -> np.ndarray:
    """n pairwise-distinct triples in [lo, hi], deterministic in seed."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(n, 3))
    bad = (
        (np.abs(pts[:, 0] - pts[:, 1]) < 1e-12)
        | (np.abs(pts[:, 1] - pts[:, 2]) < 1e-12)
    )
    while np.any(bad):
        pts[bad] = rng.uniform(lo, hi, size=(int(np.sum(bad)), 3))
        bad = (
            (np.abs(pts[:, 0] - pts[:, 1]) < 1e-12)
            | (np.abs(pts[:, 1] - pts[:, 2]) < 1e-12)
        )
    return pts


def qs_ratio_check(
    qsmap: QsMap,
    triples: np.ndarray,
    eta: Optional[EtaModulus] = None,
    t_range=(1e-4, 1e4),
    n_bins: int = 161,
) -> QsRatioReport:
    """Triple-ratio test of a claimed eta plus an empirical envelope.

    max_violation_ratio <= 1 means no sampled triple contradicts eta.
    """
    eta = eta or qsmap.eta
    if eta is None:
        raise ValueError("no claimed eta on the map and none supplied")
    triples = np.asarray(triples, dtype=float)
    x, y, z = triples[:, 0], triples[:, 1], triples[:, 2]
    if np.any(x == y) or np.any(y == z):
        raise ValueError("degenerate triple: two equal points")
    t = np.abs(x - y) / np.abs(y - z)
    fx, fy, fz = qsmap.apply(x), qsmap.apply(y), qsmap.apply(z)
    ratio = np.abs(fx - fy) / np.abs(fy - fz)

    max_violation = float(np.max(ratio / eta(t)))

    edges = np.logspace(math.log10(t_range[0]), math.log10(t_range[1]), n_bins + 1)
    envelope = np.full(n_bins, np.nan)
    idx = np.clip(np.searchsorted(edges, t) - 1, 0, n_bins - 1)
    for b in range(n_bins):
        sel = idx == b
        if np.any(sel):
            envelope[b] = np.max(ratio[sel])
    centers = np.sqrt(edges[:-1] * edges[1:])
    return QsRatioReport(
        max_violation_ratio=max_violation, t_bins=centers, empirical_eta=envelope
    )


@dataclass
class DistortionReport:
    lower: float
    ratio: float
    upper: float
    ok: bool


def distortion_check(
    qsmap: QsMap, A, B, eta: Optional[EtaModulus] = None, slack: float = 1e-12
) -> DistortionReport:
    """Two-sided diameter distortion bound for finite A inside B."""
    eta = eta or qsmap.eta
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    diam_a = float(np.max(A) - np.min(A))
    diam_b = float(np.max(B) - np.min(B))
    if diam_a <= 0:
        raise ValueError("diam A must be positive")
    fa = qsmap.apply(A)
    fb = qsmap.apply(B)
    ratio = float((np.max(fa) - np.min(fa)) / (np.max(fb) - np.min(fb)))
    lower = 1.0 / (2.0 * eta(diam_b / diam_a))
    upper = float(eta(2.0 * diam_a / diam_b))
    ok = (lower - slack <= ratio) and (ratio <= upper + slack)
    return DistortionReport(lower=lower, ratio=ratio, upper=upper, ok=ok)


def distortion_gap_check(
    qsmap: QsMap, X1, X2, eta: Optional[EtaModulus] = None, slack: float = 1e-12
) -> DistortionReport:
    """Gap-to-diameter distortion bound for separated compact pieces X1, X2."""
    eta = eta or qsmap.eta
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    X = np.concatenate([X1, X2])
    diam_x = float(np.max(X) - np.min(X))
    dist = float(np.min(np.abs(X1[:, None] - X2[None, :])))
    if dist <= 0:
        raise ValueError("X1 and X2 must be separated")
    f1, f2 = qsmap.apply(X1), qsmap.apply(X2)
    fX = np.concatenate([f1, f2])
    img_dist = float(np.min(np.abs(f1[:, None] - f2[None, :])))
    img_diam = float(np.max(fX) - np.min(fX))
    ratio = img_dist / img_diam
    lower = 1.0 / (2.0 * eta(diam_x / dist))
    upper = float(eta(2.0 * dist / diam_x))
    ok = (lower - slack <= ratio) and (ratio <= upper + slack)
    return DistortionReport(lower=lower, ratio=ratio, upper=upper, ok=ok)


@dataclass
class ImageLevel:
    """Endpoint images of one interval level under an increasing map."""

    depth: int
    lefts: np.ndarray
    rights: np.ndarray
    parent_index: np.ndarray

    @property
    def diams(self) -> np.ndarray:
        return self.rights - self.lefts

    @property
    def count(self) -> int:
        return len(self.lefts)

    def sibling_gaps(self) -> np.ndarray:
        """dist(f(E), f(E')) per binary sibling pair (2j, 2j+1)."""
        if self.count % 2 != 0:
            raise ValueError("sibling gaps assume a binary level")
        return self.lefts[1::2] - self.rights[0::2]


def push_intervals(qsmap: QsMap, level: IntervalLevel) -> ImageLevel:
    """Image diameters and gaps of a level; valid since maps are increasing."""
    return ImageLevel(
        depth=level.depth,
        lefts=qsmap.apply(level.lefts),
        rights=qsmap.apply(level.rights),
        parent_index=level.parent_index.copy(),
    )
