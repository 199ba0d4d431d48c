"""Damped Gauss-Newton inversion with TGSVD regularization.

Each iteration linearizes the residual ``r = b - M(sigma)``, solves the
regularized least-squares problem ``min ||r + J q||`` by truncated GSVD with
respect to a regularization matrix L, picks the truncation parameter, and
takes a damped step chosen by an Armijo backtracking search that also keeps
every conductivity positive.  With the minimum-gradient-support stabilizer, L
is the first-difference matrix reweighted at every iteration from the previous
update.

The truncation parameter is either re-selected at every iteration
(``strategy="iteration"``) or held fixed during a full run, with the rule
applied afterwards to the family of converged solutions
(``strategy="converged"``).  Adaptive choices never truncate beyond the first
ell whose linearized residual is below ``forcing`` times the current one, which
keeps early steps inside the region where the linearization is meaningful.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .doi import DEFAULT_ETA, doi_depth, integrated_sensitivity
from .errors import ArgumentError, EmiError, InversionFailure
from .forward import forward_and_jacobian, forward_response, stacked_jacobian
from .model import DeviceConfig, LayeredEarthModel, check_data, stack
from .regularization import gsvd, mgs_weights, reg_matrix, tgsvd_path, tgsvd_solve

log = logging.getLogger(__name__)

REG_CHOICES = ("i", "d1", "d2", "mgs")
RULE_CHOICES = ("disc", "lcurve", "fixed")
STRATEGY_CHOICES = ("iteration", "converged")
# a converged-ell scan stops after this many values without residual progress
SCAN_PLATEAU = 3
MODE_CHOICES = ("complex", "quadrature")


@dataclass(frozen=True)
class InversionConfig:
    """Options of a 1D inversion.

    ``reg`` is one of ``i``, ``d1``, ``d2`` or ``mgs`` (first differences
    reweighted with focusing parameter ``tau``).  ``rule`` picks the
    truncation parameter: ``disc`` (discrepancy principle, needs ``delta``),
    ``lcurve`` or ``fixed`` (uses ``ell`` at every iteration); ``strategy``
    says whether the rule runs at every iteration or on converged solutions.
    ``forcing`` caps adaptive choices (0 disables the cap).  ``mode`` is
    ``complex`` or ``quadrature`` (imaginary part only).  The model grid has
    ``n_layers`` equal layers down to ``depth`` metres; every value in
    ``starts`` is tried as a homogeneous starting model.
    """

    reg: str = "d1"
    tau: float = 1e-2
    rule: str = "disc"
    ell: int | None = None
    delta: float | None = None
    safety: float = 1.0
    forcing: float = 0.1
    strategy: str = "iteration"
    mode: str = "complex"
    starts: tuple = (0.5,)
    n_layers: int = 60
    depth: float = 3.5
    max_iter: int = 50
    tol_sigma: float = 1e-3
    tol_r: float = 1e-4
    beta: float = 0.5
    armijo_c: float = 1e-4
    max_backtracks: int = 40
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(float(s) for s in self.starts))
        if self.reg not in REG_CHOICES:
            raise ArgumentError(f"reg must be one of {REG_CHOICES}")
        if self.rule not in RULE_CHOICES:
            raise ArgumentError(f"rule must be one of {RULE_CHOICES}")
        if self.strategy not in STRATEGY_CHOICES:
            raise ArgumentError(f"strategy must be one of {STRATEGY_CHOICES}")
        if self.mode not in MODE_CHOICES:
            raise ArgumentError(f"mode must be one of {MODE_CHOICES}")
        if self.rule == "disc" and (self.delta is None or self.delta < 0):
            raise ArgumentError("the discrepancy principle needs a noise level delta >= 0")
        if self.rule == "fixed" and (self.ell is None or self.ell < 0):
            raise ArgumentError("a fixed rule needs ell >= 0")
        if not self.starts or any(not s > 0 for s in self.starts):
            raise ArgumentError("starting conductivities must be positive")
        if not 0 <= self.forcing < 1:
            raise ArgumentError("forcing must lie in [0, 1)")
        if not 0 < self.beta < 1 or not 0 < self.armijo_c < 1:
            raise ArgumentError("Armijo constants must lie in (0, 1)")
        if self.reg == "mgs" and not self.tau > 0:
            raise ArgumentError("tau must be positive")
        if self.n_layers < 3 or not self.depth > 0:
            raise ArgumentError("need at least 3 layers and a positive depth")

    @property
    def quadrature_only(self) -> bool:
        return self.mode == "quadrature"

    def grid(self) -> np.ndarray:
        return np.arange(self.n_layers) * (self.depth / self.n_layers)


@dataclass
class IterationRecord:
    ell: int
    alpha: float
    rnorm: float


@dataclass
class InversionResult:
    sigma: np.ndarray
    depths: np.ndarray
    iterations: list
    rnorm_history: list
    converged: bool
    reason: str
    misfit: float
    start: float
    start_index: int
    sensitivity: np.ndarray
    doi: float | None
    active_rows: int
    candidates: list = field(default_factory=list)
    error: str | None = None
    scan: list = field(default_factory=list)

    @property
    def ells(self) -> list:
        return [it.ell for it in self.iterations]


def _active(v, quadrature_only):
    """Stacked real form restricted to the rows used by the inversion."""
    v = np.asarray(v)
    return v.imag.astype(float) if quadrature_only else stack(v)


def residual(model: LayeredEarthModel, config: DeviceConfig, data, mode: str = "complex"):
    """Stacked residual (active rows only) and complex residual ``b - M(sigma)``."""
    b = check_data(data, config)
    r = b - forward_response(model, config)
    return _active(r, mode == "quadrature"), r


def effective_reg_matrix(kind: str, n: int, tau: float = 1e-2, q_prev=None) -> np.ndarray:
    """L for smooth kinds; ``D(q_prev) @ D1`` for ``mgs`` (plain D1 without a previous step)."""
    if kind != "mgs":
        return reg_matrix(kind, n)
    D1 = reg_matrix("d1", n)
    if q_prev is None:
        return D1
    return mgs_weights(q_prev, D1, tau) @ D1


def gn_step(Jt, rt, L, ell: int) -> np.ndarray:
    """Gauss-Newton update ``q`` minimizing ``||rt + Jt q||`` by TGSVD with parameter ``ell``."""
    rt = np.asarray(rt, dtype=float)
    if not np.any(rt):
        return np.zeros(np.shape(Jt)[1])
    return tgsvd_solve(gsvd(Jt, L), -rt, ell)


def line_search(sigma, q, objective, f0: float, slope: float, beta: float = 0.5,
                c: float = 1e-4, max_backtracks: int = 40):
    """Backtracking Armijo step keeping ``sigma + alpha*q`` strictly positive.

    Tries ``alpha = 1, beta, beta**2, ...`` and accepts the first value with a
    positive iterate and ``f(sigma + alpha q) <= f0 + c alpha slope`` where
    ``slope`` is the directional derivative of f along q.

    Returns
    -------
    alpha, f_new
        ``alpha = 0`` (and ``f_new = f0``) when no step is accepted.
    """
    sigma = np.asarray(sigma, dtype=float)
    q = np.asarray(q, dtype=float)
    alpha = 1.0
    for _ in range(max_backtracks + 1):
        trial = sigma + alpha * q
        if np.all(trial > 0):
            f = objective(trial)
            if np.isfinite(f) and f <= f0 + c * alpha * slope:
                return alpha, f
        alpha *= beta
    return 0.0, f0


def discrepancy_index(rnorms, target: float) -> int:
    """Smallest index whose residual norm is within ``target``; last index otherwise."""
    rnorms = np.asarray(rnorms, dtype=float)
    hit = np.flatnonzero(rnorms <= target)
    return int(hit[0]) if hit.size else rnorms.size - 1


def _path_norms(F, rt):
    path = tgsvd_path(F, -np.asarray(rt, dtype=float))
    rn = np.linalg.norm(rt[None, :] + path @ F.A.T, axis=1)
    sn = np.linalg.norm(path @ F.L.T, axis=1)
    return path, rn, sn


def select_ell_discrepancy(F, rt, delta: float, bnorm: float, safety: float = 1.0) -> int:
    """Smallest ell with ``||rt + A q_ell|| <= safety * delta * bnorm`` (else the largest ell)."""
    _, rn, _ = _path_norms(F, rt)
    return discrepancy_index(rn, safety * delta * bnorm)


def lcurve_corner(rnorms, seminorms, ells=None):
    """Corner of a discrete L-curve by maximum signed curvature in log-log scale.

    Points that break the expected ordering (residual decreasing, seminorm
    increasing along ell) are pruned first.  Returns ``(ell, flat)``; ``flat``
    is True when no corner exists, in which case ``ell`` is the first
    candidate index (1 when available).
    """
    rnorms = np.asarray(rnorms, dtype=float)
    seminorms = np.asarray(seminorms, dtype=float)
    ells = np.arange(rnorms.size) if ells is None else np.asarray(ells)
    keep = []
    for i in range(rnorms.size):
        if not (rnorms[i] > 0 and seminorms[i] > 0):
            continue
        if keep and not (rnorms[i] < rnorms[keep[-1]] and seminorms[i] > seminorms[keep[-1]]):
            continue
        keep.append(i)
    fallback = int(ells[1]) if ells.size > 1 else int(ells[0])
    if len(keep) < 3:
        return fallback, True
    x = np.log(rnorms[keep])
    y = np.log(seminorms[keep])
    P = np.stack([x, y], axis=1)
    a = P[1:-1] - P[:-2]
    b = P[2:] - P[1:-1]
    chord = P[2:] - P[:-2]
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    denom = (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
             * np.linalg.norm(chord, axis=1))
    # residual falls (x decreases) while the seminorm rises: the corner turns clockwise
    kappa = np.where(denom > 0, -2.0 * cross / np.where(denom > 0, denom, 1.0), 0.0)
    best = int(np.argmax(kappa))
    if kappa[best] <= 1e-6:
        return fallback, True
    return int(ells[keep[best + 1]]), False


def select_ell_lcurve(F, rt):
    """L-curve choice over ell = 1..ell_max-1; returns ``(ell, flat)``."""
    _, rn, sn = _path_norms(F, rt)
    return lcurve_corner(rn, sn)


class _Sounding:
    """Residual/Jacobian evaluation for one data vector."""

    def __init__(self, data, device: DeviceConfig, cfg: InversionConfig):
        self.b = check_data(data, device)
        self.device = device
        self.cfg = cfg
        self.depths = cfg.grid()
        self.q_only = cfg.quadrature_only
        bt = stack(self.b)
        self.active_rows = device.m if self.q_only else 2 * device.m
        # expected noise norm on the active rows (noise spreads evenly over all 2m)
        self.noise_scale = np.linalg.norm(bt) * math.sqrt(self.active_rows / bt.size)
        self.bnorm_active = np.linalg.norm(_active(self.b, self.q_only))

    def model(self, sigma):
        return LayeredEarthModel(self.depths, sigma)

    def evaluate(self, sigma):
        M, J = forward_and_jacobian(self.model(sigma), self.device)
        return _active(self.b - M, self.q_only), stacked_jacobian(J, self.q_only)

    def objective(self, sigma):
        r = _active(self.b - forward_response(self.model(sigma), self.device), self.q_only)
        return 0.5 * float(r @ r)


def _select(cfg, F, rt, rn, sn, noise_scale, ell=None):
    if ell is None and cfg.rule == "fixed":
        return min(cfg.ell, F.ell_max)
    # far from the solution the linearization cannot be trusted to the noise
    # level; never truncate beyond the first ell that removes a fixed fraction
    # of the current misfit
    cap = discrepancy_index(rn, cfg.forcing * float(np.linalg.norm(rt)))
    if ell is not None:
        return min(ell, cap)
    if cfg.rule == "disc":
        return min(cap, discrepancy_index(rn, cfg.safety * cfg.delta * noise_scale))
    ell, flat = lcurve_corner(rn, sn)
    if flat:
        log.debug("flat L-curve; falling back to ell=%d", ell)
    return min(ell, cap)


def _run_start(prob: _Sounding, sigma0: float, ell_fixed=None):
    cfg = prob.cfg
    n = cfg.n_layers
    sigma = np.full(n, sigma0)
    rt, Jt = prob.evaluate(sigma)
    rn0 = float(np.linalg.norm(rt))
    history = [rn0]
    records = []
    q_prev = None
    reason = "max_iter"
    for _ in range(cfg.max_iter):
        if not np.any(rt):
            reason = "exact_fit"
            break
        L = effective_reg_matrix(cfg.reg, n, cfg.tau, q_prev)
        F = gsvd(Jt, L)
        path, rn, sn = _path_norms(F, rt)
        ell = _select(cfg, F, rt, rn, sn, prob.noise_scale, ell_fixed)
        q = path[ell]
        if not np.any(q):
            reason = "zero_step"
            break
        f0 = 0.5 * history[-1] ** 2
        slope = float(rt @ (Jt @ q))
        alpha, _ = line_search(sigma, q, prob.objective, f0, slope, cfg.beta,
                               cfg.armijo_c, cfg.max_backtracks)
        if alpha == 0.0:
            reason = "stalled"
            break
        sigma = sigma + alpha * q
        rt, Jt = prob.evaluate(sigma)
        history.append(float(np.linalg.norm(rt)))
        records.append(IterationRecord(int(ell), float(alpha), history[-1]))
        q_prev = q
        if np.linalg.norm(alpha * q) < cfg.tol_sigma * np.linalg.norm(sigma):
            reason = "step"
            break
        if len(history) >= 4 and history[-4] - history[-1] <= cfg.tol_r * history[-4]:
            reason = "stagnation"
            break
    if not np.all(np.isfinite(sigma)):
        raise FloatingPointError("non-finite iterate")
    return sigma, Jt, records, history, reason


CONVERGED_REASONS = ("step", "stagnation", "exact_fit", "zero_step")


def _scan_start(prob: _Sounding, sigma0: float):
    """Converged solutions for ell = 1, 2, ...; the rule picks one of them.

    The discrepancy scan stops at the first ell that fits the noise level;
    otherwise the scan ends when ell exceeds the admissible range or the final
    residual has not improved for ``SCAN_PLATEAU`` consecutive values.
    """
    cfg = prob.cfg
    n = cfg.n_layers
    L = reg_matrix("d1" if cfg.reg == "mgs" else cfg.reg, n)
    rt, Jt = prob.evaluate(np.full(n, sigma0))
    ell_max = gsvd(Jt, L).ell_max
    target = cfg.safety * cfg.delta * prob.noise_scale if cfg.rule == "disc" else None
    runs, scan = [], []
    best, stale = np.inf, 0
    for ell in range(1, ell_max + 1):
        run = _run_start(prob, sigma0, ell)
        runs.append(run)
        rnorm = run[3][-1]
        scan.append({"ell": ell, "rnorm": rnorm,
                     "seminorm": float(np.linalg.norm(L @ run[0])), "reason": run[4]})
        if target is not None and rnorm <= target:
            break
        if rnorm < best * (1.0 - 1e-3):
            best, stale = rnorm, 0
        else:
            stale += 1
            if stale >= SCAN_PLATEAU:
                break
    if not runs:
        return _run_start(prob, sigma0), scan
    if cfg.rule == "disc":
        k = len(runs) - 1
    else:
        k, flat = lcurve_corner([r["rnorm"] for r in scan], [r["seminorm"] for r in scan])
        if flat:
            log.debug("flat L-curve over converged solutions; taking ell=%d", scan[k]["ell"])
    for i, row in enumerate(scan):
        row["selected"] = i == k
    return runs[k], scan


def invert_sounding(data, device: DeviceConfig, cfg: InversionConfig) -> InversionResult:
    """Invert one sounding from every starting model; keep the smallest final residual."""
    prob = _Sounding(data, device, cfg)
    best = None
    candidates = []
    scan_rule = cfg.strategy == "converged" and cfg.rule != "fixed"
    for idx, s0 in enumerate(cfg.starts):
        try:
            if scan_rule:
                (sigma, Jt, records, history, reason), scan = _scan_start(prob, s0)
            else:
                sigma, Jt, records, history, reason = _run_start(prob, s0)
                scan = []
        except (EmiError, FloatingPointError, np.linalg.LinAlgError) as exc:
            candidates.append({"start": s0, "rnorm": None, "reason": "failed", "error": str(exc)})
            continue
        candidates.append({"start": s0, "rnorm": history[-1], "reason": reason, "error": None})
        if best is None or history[-1] < best[4][-1]:
            best = (idx, sigma, Jt, records, history, reason, scan)
    if best is None:
        raise InversionFailure("no starting model produced a finite solution", candidates)
    idx, sigma, Jt, records, history, reason, scan = best
    sens = integrated_sensitivity(Jt)
    try:
        doi = doi_depth(sens, prob.depths, cfg.eta)
    except EmiError:
        doi = None
    misfit = history[-1] / prob.bnorm_active if prob.bnorm_active > 0 else history[-1]
    return InversionResult(
        sigma=sigma, depths=prob.depths, iterations=records, rnorm_history=history,
        converged=reason in CONVERGED_REASONS, reason=reason, misfit=float(misfit),
        start=cfg.starts[idx], start_index=idx, sensitivity=sens, doi=doi,
        active_rows=prob.active_rows, candidates=candidates, scan=scan)


def _failed_result(cfg, exc):
    depths = cfg.grid()
    nan = np.full(cfg.n_layers, np.nan)
    return InversionResult(
        sigma=nan, depths=depths, iterations=[], rnorm_history=[], converged=False,
        reason="failed", misfit=float("nan"), start=float("nan"), start_index=-1,
        sensitivity=nan.copy(), doi=None, active_rows=0,
        candidates=getattr(exc, "per_start", []), error=str(exc))


def _invert_one(args):
    data, device, cfg = args
    try:
        return invert_sounding(data, device, cfg)
    except EmiError as exc:
        return _failed_result(cfg, exc)


def invert_section(soundings, device: DeviceConfig, cfg: InversionConfig,
                   workers: int = 1) -> list:
    """Invert every sounding independently; results keep the input order.

    Failed soundings yield a result with ``reason == "failed"`` instead of
    aborting the section.
    """
    jobs = [(d, device, cfg) for d in soundings]
    if workers <= 1 or len(jobs) <= 1:
        return [_invert_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_invert_one, jobs))
