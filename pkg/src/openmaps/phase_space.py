"""Gaussian wave-packet calculus and phase-space experiments.

Packets are stored symbolically: a phase-space center, a unit-determinant
frame recording the accumulated linear symplectic action, and Hermite
coefficients on top of the ground Gaussian.  Translations and metaplectic
maps act exactly on this data; floating error enters only when a packet
is sampled on a grid.  The torus side discretizes packets by periodizing
line values with a half-integer twist, which makes the N-point coherent
family an exactly tight frame (the frame operator is a scalar), and that
exactness is what the trace quadrature, the Husimi mass bookkeeping, and
the anti-Wick damping assembly all lean on.

Conventions: the ground profile is (πh)^{-1/4} e^{-x²/2h}; excited
levels use physicists' Hermite polynomials scaled by 2^{-n/2}, so the
n-th basis packet has squared norm n!.  Translation by (x0, ξ0) acts as
u(x) → e^{-i x0 ξ0/2h} e^{i x ξ0/h} u(x - x0).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermval

from .baker_classical import BakerSpec, TorusPoint, forward
from .errors import DegenerateFrame, DimensionMismatch, NotSymplectic
from .quantum_baker import QuantumState, apply, build, dense

TWO_PI = 2.0 * math.pi
DET_TOL = 1e-12
GRID_THETA = 0.5  # half-integer twist on both torus directions
PERIODIZE_TAIL = 1e-14


def _as_frame(mat):
    arr = np.asarray(mat, dtype=float)
    if arr.shape != (2, 2):
        raise ValueError("frame must be 2x2")
    return ((float(arr[0, 0]), float(arr[0, 1])),
            (float(arr[1, 0]), float(arr[1, 1])))


@dataclass(frozen=True)
class WavePacket:
    """Symbolic Gaussian packet: phase · T(center) 𝓜(frame) Λ_h Σ cₙ hₙΨ₀."""

    h: float
    center: tuple
    frame: tuple
    hermite_coeffs: tuple
    phase: complex = 1.0 + 0.0j

    def __post_init__(self):
        if not (self.h > 0):
            raise ValueError("h > 0")
        object.__setattr__(self, "center",
                           (float(self.center[0]), float(self.center[1])))
        frame = _as_frame(self.frame)
        (a, b), (c, d) = frame
        if abs(a * d - b * c - 1.0) > DET_TOL:
            raise ValueError(f"frame determinant {a * d - b * c} != 1")
        object.__setattr__(self, "frame", frame)
        coeffs = tuple(complex(z) for z in self.hermite_coeffs)
        if not coeffs:
            raise ValueError("at least one Hermite coefficient")
        object.__setattr__(self, "hermite_coeffs", coeffs)
        ph = complex(self.phase)
        if abs(abs(ph) - 1.0) > 1e-12:
            raise ValueError("phase must have modulus 1")
        object.__setattr__(self, "phase", ph)

    @property
    def frame_w(self):
        (a, b), _ = self.frame
        return complex(a, b)

    @property
    def squeeze(self):
        """γ of the evaluated Gaussian: (c+id)/(a+ib), Im γ = |a+ib|^{-2}."""
        (a, b), (c, d) = self.frame
        w = complex(a, b)
        if abs(w) ** 2 < 1e-300:
            # unit determinant forces |a+ib| > 0; this is pure paranoia
            raise DegenerateFrame("frame top row is numerically null")
        return complex(c, d) / w

    def norm_squared(self):
        """Exact L² norm²: the n-th basis packet carries weight n!."""
        return float(sum(
            abs(z) ** 2 * math.factorial(n)
            for n, z in enumerate(self.hermite_coeffs)
        ))


def ground_state(h):
    return WavePacket(h=h, center=(0.0, 0.0), frame=((1.0, 0.0), (0.0, 1.0)),
                      hermite_coeffs=(1.0 + 0.0j,))


def translate(wp, rho):
    """Shift the center; the Weyl cocycle e^{-i(ρ∧center)/2h} hits the phase."""
    dx, dxi = float(rho[0]), float(rho[1])
    x0, xi0 = wp.center
    cocycle = complex(math.cos((dx * xi0 - dxi * x0) / (2 * wp.h)),
                      -math.sin((dx * xi0 - dxi * x0) / (2 * wp.h)))
    return replace(wp, center=(x0 + dx, xi0 + dxi), phase=wp.phase * cocycle)


def metaplectic(wp, kappa):
    """Exact symbolic action: center and frame rotate, coefficients stay."""
    arr = np.asarray(kappa, dtype=float)
    if arr.shape != (2, 2) or abs(np.linalg.det(arr) - 1.0) > DET_TOL:
        raise NotSymplectic(f"kappa determinant {np.linalg.det(arr)} != 1")
    center = arr @ np.array(wp.center)
    frame = arr @ np.array(wp.frame)
    return replace(wp, center=(float(center[0]), float(center[1])),
                   frame=_as_frame(frame))


def sample_line(wp, xs):
    """Evaluate the packet pointwise on the line."""
    xs = np.asarray(xs, dtype=float)
    h = wp.h
    x0, xi0 = wp.center
    w = wp.frame_w
    gamma = wp.squeeze
    aw = abs(w)
    s = w.conjugate() / aw  # branch of ((a-ib)/(a+ib))^{1/2}, used as s^n
    coeff = np.zeros(len(wp.hermite_coeffs), dtype=np.complex128)
    for n, z in enumerate(wp.hermite_coeffs):
        coeff[n] = z * s**n * 2.0 ** (-0.5 * n)
    xr = (xs - x0) / (math.sqrt(h) * aw)
    herm = hermval(xr, coeff)
    pref = (aw * aw * math.pi * h) ** -0.25
    gauss = np.exp(0.5j * gamma * (xs - x0) ** 2 / h)
    trans = np.exp(1j * xs * xi0 / h) * complex(
        math.cos(x0 * xi0 / (2 * h)), -math.sin(x0 * xi0 / (2 * h))
    )
    return wp.phase * pref * trans * herm * gauss


def _torus_amps(wp, N, theta=GRID_THETA):
    """Periodize line values over lattice translates with the grid twist."""
    if abs(wp.h * TWO_PI * N - 1.0) > 1e-9:
        raise DimensionMismatch(f"packet h={wp.h} does not match torus N={N}")
    base = (np.arange(N) + theta) / N
    amps = np.zeros(N, dtype=np.complex128)
    peak = 0.0
    for j in range(0, 65):
        shifts = [0] if j == 0 else [j, -j]
        ring = 0.0
        for jj in shifts:
            sign = 1.0 if jj % 2 == 0 else -1.0
            vals = sign * sample_line(wp, base + jj)
            amps += vals
            ring = max(ring, float(np.max(np.abs(vals))))
        peak = max(peak, float(np.max(np.abs(amps))))
        if j > 0 and ring <= PERIODIZE_TAIL * max(peak, 1e-300):
            break
    return amps / math.sqrt(N)


def to_grid(wp, target):
    """Sample on a line grid (x_min, x_max, n_pts) or on the N-point torus."""
    if isinstance(target, (int, np.integer)):
        return QuantumState(int(target), _torus_amps(wp, int(target)))
    x_min, x_max, n_pts = target
    xs = np.linspace(float(x_min), float(x_max), int(n_pts))
    return sample_line(wp, xs)


def torus_coherent(N, rho, normalize=False):
    """Ground coherent state centered at rho on the N-point torus."""
    h = 1.0 / (TWO_PI * N)
    state = to_grid(translate(ground_state(h), rho), N)
    if normalize:
        return QuantumState(N, state.amps / np.linalg.norm(state.amps))
    return state


def _gauss_window(N, x0, theta=GRID_THETA):
    """Signed periodized ground Gaussian column at position center x0."""
    h = 1.0 / (TWO_PI * N)
    base = (np.arange(N) + theta) / N
    out = np.zeros(N)
    pref = (math.pi * h) ** -0.25 / math.sqrt(N)
    for j in range(0, 65):
        shifts = [0] if j == 0 else [j, -j]
        ring = 0.0
        for jj in shifts:
            sign = 1.0 if jj % 2 == 0 else -1.0
            vals = sign * pref * np.exp(-((base + jj - x0) ** 2) / (2 * h))
            out += vals
            ring = max(ring, float(np.max(np.abs(vals))))
        if j > 0 and ring <= PERIODIZE_TAIL * max(float(np.max(np.abs(out))), 1e-300):
            break
    return out


def husimi(state, K):
    """K×K field of |⟨u, φ_ρ⟩|²/(2πh) over the grid ρ = (i/K, j/K)."""
    if K < 8:
        raise ValueError("K >= 8")
    N = state.N
    u = np.conj(state.amps)
    field = np.empty((K, K))
    if K == N:
        # at grid step 1/N the lattice-translate phases collapse and the
        # row over ξ0 is one inverse FFT of the windowed amplitudes
        for i1 in range(K):
            v = u * _gauss_window(N, i1 / K)
            row = np.fft.ifft(v) * N
            field[i1, :] = N * np.abs(row) ** 2
        return field
    k = np.arange(N)
    k2 = np.arange(K)
    phase_k = np.exp(2j * np.pi * np.outer(k2, (k + GRID_THETA)) / K)
    h = 1.0 / (TWO_PI * N)
    base = (k + GRID_THETA) / N
    pref = (math.pi * h) ** -0.25 / math.sqrt(N)
    for i1 in range(K):
        x0 = i1 / K
        acc = np.zeros(K, dtype=np.complex128)
        for jj in range(-3, 4):
            sign = 1.0 if jj % 2 == 0 else -1.0
            amp_j = sign * pref * np.exp(-((base + jj - x0) ** 2) / (2 * h))
            if np.max(np.abs(amp_j)) < 1e-18:
                continue
            acc += np.exp(2j * np.pi * k2 * jj * N / K) * (phase_k @ (u * amp_j))
        field[i1, :] = N * np.abs(acc) ** 2
    return field


def husimi_mass(field):
    """Quadrature mass of a Husimi field: cell area 1/K² per node."""
    K = field.shape[0]
    return float(field.sum()) / (K * K)


def coherent_grid_trace(matrix, K=None):
    """Trace by coherent-state quadrature over the K² grid, weight N/K².

    At the native grid K = N the lattice-translate phases of the torus
    coherent states cancel exactly and each ξ0 row of rank-one projectors
    sums to N·diag(g²), so the whole quadrature collapses to a weighted
    diagonal sum; that collapse is an identity of the sum, not an
    approximation, and keeps the cost at O(N²).  Other grids fall back to
    assembling every coherent state explicitly.
    """
    matrix = np.asarray(matrix, dtype=np.complex128)
    N = matrix.shape[0]
    if matrix.shape != (N, N):
        raise ValueError("square matrix expected")
    K = N if K is None else int(K)
    if K == N:
        diag = np.zeros(N)
        for i1 in range(N):
            g = _gauss_window(N, i1 / N)
            diag += g * g
        return complex(np.sum(np.diagonal(matrix) * diag))
    h = 1.0 / (TWO_PI * N)
    total = 0.0 + 0.0j
    for i1 in range(K):
        for i2 in range(K):
            phi = _torus_amps(translate(ground_state(h), (i1 / K, i2 / K)), N)
            total += np.vdot(phi, matrix @ phi)
    return complex(total * N / (K * K))


@dataclass(frozen=True)
class EscapeParams:
    """Knobs of the log-ratio escape weight; epsilon is tied to h."""

    h: float
    delta: float
    m_const: float = 1.0
    t: float = 1.0

    def __post_init__(self):
        if not (self.h > 0):
            raise ValueError("h > 0")
        if not (0.0 < self.delta < 0.5):
            raise ValueError("delta in (0, 1/2)")
        if not (self.m_const > 0):
            raise ValueError("m_const > 0")
        if not (self.t >= 0):
            raise ValueError("t >= 0")

    @property
    def epsilon(self):
        return float(self.h ** (2.0 * self.delta))


def default_depth(spec, params):
    """Cover depth matching the epsilon scale: ⌈2δ·log(1/h)/log a⌉."""
    return int(math.ceil(
        2.0 * params.delta * math.log(1.0 / params.h) / math.log(spec.a)
    ))


@lru_cache(maxsize=64)
def _cover_starts(a, alphabet, depth):
    """Sorted left endpoints of the depth-n cylinder cover of the Cantor set."""
    starts = np.array([0.0])
    for _ in range(depth):
        starts = (starts[None, :] + np.array(alphabet)[:, None]).ravel() / a
    return np.sort(starts)


def _cover_distance(spec, vals, depth):
    """Torus distance from each value to the depth-n cylinder cover."""
    starts = _cover_starts(spec.a, tuple(spec.alphabet), depth)
    width = spec.a ** float(-depth)
    vals = np.atleast_1d(np.asarray(vals, dtype=float)) % 1.0
    # candidates: the point and its two lattice translates, clipped into
    # each nearest interval [s, s+width]
    best = np.full(vals.shape, np.inf)
    for shift in (-1.0, 0.0, 1.0):
        x = vals + shift
        idx = np.searchsorted(starts, x)
        for j in (idx - 1, idx % len(starts)):
            j = np.clip(j, 0, len(starts) - 1)
            s = starts[j]
            d = np.where(x < s, s - x, np.where(x > s + width, x - s - width, 0.0))
            best = np.minimum(best, d)
    return best


def trapped_distance(spec, rho, depth, side="both"):
    """Distance (sup metric) to the cylinder cover of a trapped set.

    "forward" measures the x coordinate against the forward-trapped set,
    "backward" measures ξ against the backward-trapped set, and "both"
    takes the max of the two, i.e. distance to the cover of their
    intersection.
    """
    x, xi = float(rho[0]), float(rho[1])
    if side == "forward":
        return float(_cover_distance(spec, x, depth)[0])
    if side == "backward":
        return float(_cover_distance(spec, xi, depth)[0])
    if side == "both":
        return float(max(_cover_distance(spec, x, depth)[0],
                         _cover_distance(spec, xi, depth)[0]))
    raise ValueError("side must be forward, backward or both")


def escape_g(spec, rho, params, depth=None):
    """Log-ratio escape weight at one phase-space point.

    Negative near the forward-trapped set, positive near the
    backward-trapped set, zero on the trapped set itself and anywhere
    the two cover distances tie.
    """
    depth = default_depth(spec, params) if depth is None else int(depth)
    eps = params.epsilon
    floor = params.m_const * eps + eps
    d_minus = _cover_distance(spec, float(rho[0]), depth)[0]
    d_plus = _cover_distance(spec, float(rho[1]), depth)[0]
    return float(math.log(floor + d_minus**2) - math.log(floor + d_plus**2))


def escape_grid(spec, K, params, depth=None):
    """Escape weight on the (i/K, j/K) grid; separable, so O(K) work."""
    depth = default_depth(spec, params) if depth is None else int(depth)
    eps = params.epsilon
    floor = params.m_const * eps + eps
    vals = np.arange(K) / K
    d = _cover_distance(spec, vals, depth)
    u = np.log(floor + d**2)
    return u[:, None] - u[None, :]


def _expm_scaled(evals, evecs, t):
    return (evecs * np.exp(-t * evals)[None, :]) @ evecs.conj().T


def damping_operator(spec, N, params, depth=None, also_inverse=False):
    """Anti-Wick quantization of the escape weight and its exponential.

    G = Σ_grid g(ρ) w |φ_ρ⟩⟨φ_ρ| over the N×N coherent grid with weight
    w = N/K² (K = N).  Per x0 column the ξ0 sum of projectors is a
    Toeplitz multiplier given by the FFT of the g row, so assembly costs
    O(N² + N·W²) with W the Gaussian window.  Returns (G, expm(-t·G)),
    plus expm(+t·G) when also_inverse is set.
    """
    from .errors import BadDimension  # alignment with quantized map sizes

    if N <= 0:
        raise BadDimension(f"N={N} must be positive")
    K = N
    gfield = escape_grid(spec, K, params, depth)
    G = np.zeros((N, N), dtype=np.complex128)
    idx = np.arange(N)
    for i1 in range(K):
        g = _gauss_window(N, i1 / K)
        win = np.nonzero(np.abs(g) > 1e-18 * np.max(np.abs(g)))[0]
        fr = np.fft.ifft(gfield[i1, :]) * N  # Σ_ξ g·e^{2πi(k-l)ξ0}
        block = (g[win, None] * g[None, win]) * fr[(idx[win, None] - idx[None, win]) % N]
        G[np.ix_(win, win)] += block
    G *= N / (K * K)
    G = 0.5 * (G + G.conj().T)
    evals, evecs = np.linalg.eigh(G)
    expm_neg = _expm_scaled(evals, evecs, params.t)
    if also_inverse:
        return G, expm_neg, _expm_scaled(evals, evecs, -params.t)
    return G, expm_neg


@dataclass(frozen=True)
class ExperimentParams:
    """Propagation-depth policy: n(h) = ⌊vartheta·log(1/h)⌋.

    The conservative window is vartheta ≤ (1-4ε)/(6·lambda_max·(1+ε)²);
    slack > 0 deliberately allows longer propagation than that window.
    """

    vartheta: float
    lambda_max: float
    slack: float = 0.0
    n_override: int | None = None

    def __post_init__(self):
        if not (self.vartheta > 0 and self.lambda_max > 0):
            raise ValueError("vartheta and lambda_max must be positive")
        if self.slack < 0:
            raise ValueError("slack >= 0")
        cap = (1.0 + self.slack) / (6.0 * self.lambda_max)
        if self.vartheta > cap * (1 + 1e-12):
            raise ValueError(
                f"vartheta={self.vartheta} exceeds (1+slack)/(6 lambda_max)={cap}"
            )

    def n_steps(self, h):
        if self.n_override is not None:
            return int(self.n_override)
        return int(math.floor(self.vartheta * math.log(1.0 / h)))


def default_vartheta(epsilon, lambda_max):
    """Conservative propagation-rate window for a given regularization."""
    return (1.0 - 4.0 * epsilon) / (6.0 * lambda_max * (1.0 + epsilon) ** 2)


def damped_propagation_experiment(spec, N, rho0, params, n_max, depth=None):
    """Norm² history w_n = ‖(e^{-tG} M)ⁿ φ_ρ0‖², n = 0..n_max."""
    op = build(spec, N)
    _, damp = damping_operator(spec, N, params, depth)
    state = torus_coherent(N, rho0, normalize=True)
    psi = state.amps
    w = [1.0]
    for _ in range(int(n_max)):
        psi = damp @ apply(op, QuantumState(N, psi)).amps
        w.append(float(np.vdot(psi, psi).real))
    return np.array(w)


def hs_trace_experiment(spec, N_list, params, exp_params, depth=None,
                        both_paths_max_N=729):
    """Hilbert-Schmidt norm² of the damped n-step propagator across sizes.

    For each N the conjugated step A = e^{-tG} M e^{tG} is raised to
    n = n(h) and tr(Aⁿ* Aⁿ) is computed directly; below the size cap the
    same trace is recomputed by coherent-grid quadrature.  params.h is
    rebound to 1/(2πN) for each size.  Returns the per-size records and
    a least-squares exponent of log trace against log(1/h).
    """
    entries = []
    for N in N_list:
        N = int(N)
        h = 1.0 / (TWO_PI * N)
        p = replace(params, h=h)
        mat = dense(build(spec, N), cap=max(N, 6561))
        _, damp, undamp = damping_operator(spec, N, p, depth, also_inverse=True)
        step = damp @ mat @ undamp
        n = exp_params.n_steps(h)
        power = np.linalg.matrix_power(step, n)
        direct = float(np.linalg.norm(power, "fro") ** 2)
        quad = None
        if N <= both_paths_max_N:
            quad = float(coherent_grid_trace(power.conj().T @ power).real)
        entries.append({"N": N, "h": h, "n": n, "trace_direct": direct,
                        "trace_quadrature": quad})
    xs = np.array([math.log(1.0 / e["h"]) for e in entries])
    ys = np.array([math.log(e["trace_direct"]) for e in entries])
    if len(entries) >= 2:
        design = np.column_stack([np.ones_like(xs), xs])
        coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
        resid = ys - design @ coef
        dof = max(len(xs) - 2, 1)
        cov = np.linalg.inv(design.T @ design) * float(resid @ resid) / dof
        exponent, stderr = float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))
    else:
        exponent, stderr = float("nan"), float("nan")
    return {"t": params.t, "delta": params.delta,
            "vartheta": exp_params.vartheta, "entries": entries,
            "exponent": exponent, "stderr": stderr}


def propagation_to_json(spec, N, rho0, params, w):
    """Stable JSON payload for a damped propagation run."""
    return json.dumps({
        "N": int(N), "a": spec.a, "alphabet": list(spec.alphabet),
        "rho0": [float(rho0[0]), float(rho0[1])],
        "t": params.t, "delta": params.delta,
        "n": list(range(len(w))), "w": [float(v) for v in w],
    }, sort_keys=True)


def husimi_to_csv(field, path):
    """Write a Husimi field as x_index,xi_index,value rows."""
    K = field.shape[0]
    with open(path, "w") as fh:
        fh.write("x_index,xi_index,value\n")
        for i in range(K):
            for j in range(K):
                fh.write(f"{i},{j},{float(field[i, j])!r}\n")


def husimi_from_csv(path):
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if header.strip() != "x_index,xi_index,value":
            raise ValueError("unexpected Husimi CSV header")
        for line in fh:
            i, j, v = line.strip().split(",")
            rows.append((int(i), int(j), float(v)))
    K = max(r[0] for r in rows) + 1
    field = np.zeros((K, K))
    for i, j, v in rows:
        field[i, j] = v
    return field
