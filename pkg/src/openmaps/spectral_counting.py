"""Eigenvalue spectra of open maps, annulus counts, and Weyl-law fits.

The resonance proxy is the full eigenvalue set of the subunitary matrix;
counts in annuli {|z| >= nu} are regressed against the dimension to
extract the fractal Weyl exponent, and a report compares per-dimension
counts against an exponent improved by the spectral-gap function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateCounts, NoConvergence

# counting dead band: moduli within this of nu count as above
TIE_BAND = 1e-10
RESIDUAL_REL = 1e-8


@dataclass(frozen=True)
class SpectrumRecord:
    """All N eigenvalues of one matrix plus the worst eigenpair residual."""

    N: int
    eigenvalues: np.ndarray
    residual_max: float

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=np.complex128)
        if vals.shape != (self.N,):
            raise ValueError(f"{vals.shape} eigenvalues for N={self.N}")
        object.__setattr__(self, "eigenvalues", vals)


@dataclass(frozen=True)
class WeylFit:
    """Log-log slope of annulus counts against dimension."""

    nu: float
    points: tuple
    slope: float
    stderr: float

    def to_json(self):
        return json.dumps(
            {
                "nu": self.nu,
                "points": [[int(n), int(c)] for n, c in self.points],
                "slope": self.slope,
                "stderr": self.stderr,
            },
            sort_keys=True,
        )


def _norm_estimate(matrix, iters=30):
    """Power-iteration estimate of the spectral norm (guard use only)."""
    rng = np.random.Generator(np.random.Philox(0))
    v = rng.normal(size=matrix.shape[1]) + 1j * rng.normal(size=matrix.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = matrix.conj().T @ (matrix @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    return float(math.sqrt(nw))


def eigenvalues(matrix):
    """Full dense spectrum with a per-pair residual certificate."""
    matrix = np.asarray(matrix, dtype=np.complex128)
    n = matrix.shape[0]
    if matrix.shape != (n, n):
        raise ValueError("square matrix expected")
    vals, vecs = scipy.linalg.eig(matrix)
    if not np.all(np.isfinite(vals)):
        raise NoConvergence("eigensolver returned non-finite values")
    resid = np.linalg.norm(matrix @ vecs - vecs * vals[None, :], axis=0)
    resid /= np.maximum(np.linalg.norm(vecs, axis=0), 1e-300)
    residual_max = float(resid.max())
    norm = _norm_estimate(matrix)
    if residual_max > RESIDUAL_REL * max(norm, 1e-15) * max(n, 1):
        raise NoConvergence(
            f"residual {residual_max:.3e} above contract at norm {norm:.3e}"
        )
    order = np.argsort(-np.abs(vals), kind="stable")
    return SpectrumRecord(N=n, eigenvalues=vals[order], residual_max=residual_max)


def count_annulus(record, nu):
    """#{lambda : |lambda| >= nu}, with ties within the dead band counted."""
    if nu < 0:
        raise ValueError("nu >= 0")
    return int(np.sum(np.abs(record.eigenvalues) >= nu - TIE_BAND))


def weyl_exponent(records, nu):
    """Slope of log count vs log N over records at geometric dimensions.

    Zero counts cannot enter a log fit; they are dropped (and kept in the
    points list for the record).  Fewer than three surviving points is an
    error rather than a degenerate answer.
    """
    if len(records) < 3:
        raise DegenerateCounts("need >= 3 spectra")
    points = tuple((rec.N, count_annulus(rec, nu)) for rec in records)
    used = [(n, c) for n, c in points if c >= 1]
    if len(used) < 3:
        raise DegenerateCounts(f"fewer than 3 nonzero counts at nu={nu}")
    x = np.log([n for n, _ in used])
    y = np.log([c for _, c in used])
    design = np.column_stack([np.ones(x.size), x])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(x.size - 2, 1)
    var = float(resid @ resid) / dof / float(((x - x.mean()) ** 2).sum())
    return WeylFit(nu=float(nu), points=points, slope=float(coef[1]),
                   stderr=float(math.sqrt(var)))


def annulus_gap_exponent(nu, d_h, log_expansion):
    """Gap improvement for counts in {|z| >= nu} in the toy scaling.

    The radial cutoff nu corresponds to decay gamma = -log(nu)/log_expansion
    per unit time; the improvement is max(1 - d_h - 2*gamma, 0).
    """
    if not (0 < nu <= 1):
        raise ValueError("nu in (0, 1]")
    if log_expansion <= 0:
        raise ValueError("log_expansion > 0")
    gamma = -math.log(nu) / log_expansion
    return max(1.0 - d_h - 2.0 * gamma, 0.0)


def bound_report(fit, d_h, sigma_nu):
    """Per-dimension ratios against the improved exponent d_h - sigma.

    Ratios count / N^(d_h - sigma) should stay bounded if the improved
    upper bound holds; monotone growth by more than 2x across the range
    is flagged.
    """
    if not (math.isfinite(d_h) and math.isfinite(sigma_nu)):
        raise ValueError("finite d_h, sigma_nu required")
    exponent = d_h - sigma_nu
    ratios = [
        (int(n), float(c) / float(n) ** exponent)
        for n, c in fit.points
        if c >= 1
    ]
    vals = [r for _, r in ratios]
    growing = (
        len(vals) >= 2
        and all(b > a for a, b in zip(vals, vals[1:]))
        and vals[-1] > 2.0 * vals[0]
    )
    return {
        "nu": fit.nu,
        "exponent": exponent,
        "ratios": ratios,
        "bounded": not growing,
    }


def spectrum_to_csv(record):
    lines = ["re,im,modulus"]
    for z in record.eigenvalues:
        lines.append(f"{float(z.real)!r},{float(z.imag)!r},{float(abs(z))!r}")
    return "\n".join(lines) + "\n"


def spectrum_from_csv(text):
    rows = [ln for ln in text.strip().splitlines() if ln]
    if rows[0] != "re,im,modulus":
        raise ValueError(f"bad header {rows[0]!r}")
    vals = np.array(
        [complex(float(r.split(",")[0]), float(r.split(",")[1])) for r in rows[1:]]
    )
    resid = 0.0
    return SpectrumRecord(N=len(vals), eigenvalues=vals, residual_max=resid)
