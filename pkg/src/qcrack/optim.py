"""Derivative-free minimisers.

``cobyla`` is an unconstrained linear-approximation trust-region method with
the control flow of Powell's COBYLA: keep a simplex of ``d + 1`` evaluated
points, fit the linear interpolant through them, step a distance ``rho`` down
its slope, and swap the new point into the simplex.  When the simplex becomes
too stretched or too flat a geometry step replaces its worst vertex instead.
``rho`` halves whenever a trial step from a well-shaped simplex fails to give
a worthwhile decrease, and the run ends once it would drop below ``rho_end``.

``nelder_mead`` is the usual reflection/expansion/contraction simplex search
and ships as a cross-check.

Budget: ``max_iters`` counts objective evaluations (including the initial
simplex), so ``nfev <= max_iters * repeats`` objective calls in total.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

log = logging.getLogger(__name__)

# geometry thresholds from COBYLA: vertex distance limit and flatness limit,
# both relative to rho
_BETA = 2.1
_ALPHA = 0.25
_GAMMA = 0.5
_GOOD_RATIO = 0.1


@dataclass
class OptimizerConfig:
    algorithm: str = "cobyla"
    max_iters: int = 500
    rho_begin: float = 0.5
    rho_end: float = 1e-3
    seed: int = 0
    repeats: int = 1

    def __post_init__(self):
        if self.algorithm not in ("cobyla", "nelder-mead"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not self.rho_end < self.rho_begin:
            raise ValueError("rho_end must be smaller than rho_begin")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    nfev: int
    trajectory: list = field(default_factory=list)
    termination: str = ""
    rejected: int = 0

    @property
    def best_trajectory(self) -> np.ndarray:
        """Best-so-far objective after each evaluation."""
        return np.minimum.accumulate(np.asarray(self.trajectory, dtype=float))

    @property
    def success(self) -> bool:
        return np.isfinite(self.fun)


class _Budget(Exception):
    pass


class _Tracker:
    """Counts evaluations, records the trajectory and the best point."""

    def __init__(self, fn, cfg: OptimizerConfig, callback):
        self.fn = fn
        self.cfg = cfg
        self.callback = callback
        self.trajectory = []
        self.rejected = 0
        self.best_x = None
        self.best_f = np.inf

    def __call__(self, x: np.ndarray) -> float:
        if len(self.trajectory) >= self.cfg.max_iters:
            raise _Budget
        vals = [float(self.fn(x.copy())) for _ in range(self.cfg.repeats)]
        f = float(np.mean(vals))
        if not np.isfinite(f):
            self.rejected += 1
            f = np.inf
        self.trajectory.append(f)
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        if self.callback is not None:
            self.callback(len(self.trajectory), x.copy(), f)
        return f

    def result(self, reason: str, x0) -> OptResult:
        x = self.best_x if self.best_x is not None else np.asarray(x0, dtype=float).copy()
        return OptResult(x, self.best_f, len(self.trajectory), self.trajectory, reason, self.rejected)


def minimize(objective: Callable[[np.ndarray], float], x0, cfg: OptimizerConfig | None = None,
             callback: Callable | None = None) -> OptResult:
    """Minimise ``objective`` from ``x0``.

    ``callback(k, x, f)`` fires after every evaluation.  Non-finite objective
    values are rejected: they never enter the simplex and are counted in
    ``OptResult.rejected``.
    """
    cfg = cfg or OptimizerConfig()
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be finite")
    track = _Tracker(objective, cfg, callback)
    run = _cobyla if cfg.algorithm == "cobyla" else _nelder_mead
    try:
        reason = run(track, x0, cfg)
    except _Budget:
        reason = "max_iters"
    return track.result(reason, x0)


def _cobyla(f, x0: np.ndarray, cfg: OptimizerConfig) -> str:
    d = x0.size
    rho = cfg.rho_begin
    delta = rho  # trust radius, never below rho
    rng = np.random.default_rng(cfg.seed)
    sim = np.vstack([x0, x0 + rho * np.eye(d)])
    fs = np.array([f(x) for x in sim])
    chained = False  # last trial step succeeded: skip geometry repair once

    while True:
        b = int(np.argmin(fs))
        if b != 0:
            sim[[0, b]] = sim[[b, 0]]
            fs[[0, b]] = fs[[b, 0]]
        D = sim[1:] - sim[0]
        try:
            Dinv = np.linalg.inv(D)
        except np.linalg.LinAlgError:
            Dinv = None
        lengths = np.linalg.norm(D, axis=1)
        finite = np.isfinite(fs[1:])

        if Dinv is None:
            bad = int(np.argmin(lengths))
        elif not finite.all():
            bad = int(np.argmin(finite))
        else:
            vsig = 1.0 / np.linalg.norm(Dinv, axis=0)
            if lengths.max() > _BETA * delta:
                bad = int(np.argmax(lengths))
            elif vsig.min() < _ALPHA * delta:
                bad = int(np.argmin(vsig))
            else:
                bad = -1
        acceptable = bad < 0
        usable = Dinv is not None and finite.all()
        grad = Dinv @ (fs[1:] - fs[0]) if usable else np.zeros(d)

        if not acceptable and (not chained or not usable):
            if Dinv is not None and not np.isfinite(fs[bad + 1]):
                # rejected vertex: try the other side of the pivot, closer in
                xn = sim[0] - _GAMMA * D[bad]
                sim[bad + 1] = xn
                fs[bad + 1] = f(xn)
                continue
            # geometry step: move the offending vertex to distance gamma*delta
            # from the pivot along the normal of the opposite face
            direction = Dinv[:, bad].copy() if Dinv is not None else rng.standard_normal(d)
            direction /= np.linalg.norm(direction)
            if grad @ direction > 0:
                direction = -direction
            xn = sim[0] + _GAMMA * delta * direction
            sim[bad + 1] = xn
            fs[bad + 1] = f(xn)
            chained = False
            continue

        chained = False
        gnorm = np.linalg.norm(grad)
        ratio = -np.inf
        if gnorm > 0:
            step = -delta * grad / gnorm
            xn = sim[0] + step
            f0 = fs[0]
            fn = f(xn)
            if np.isfinite(fn):
                ratio = (f0 - fn) / (delta * gnorm)
                lam = Dinv.T @ step
                volume = np.concatenate([[abs(1.0 - lam.sum())], np.abs(lam)])
                dist = np.linalg.norm(sim - xn, axis=1)
                score = volume * np.maximum(1.0, dist / delta)
                if fn >= f0:
                    score[0] = 0.0
                j = int(np.argmax(score))
                if score[j] > 1e-8:
                    sim[j] = xn
                    fs[j] = fn
            # trust radius update
            if ratio <= _GOOD_RATIO:
                delta *= 0.5
            elif ratio > 0.7:
                delta = 2.0 * delta
            if delta <= 1.5 * rho:
                delta = rho
            if ratio > _GOOD_RATIO:
                chained = True
                continue
            if delta > rho or not acceptable:
                continue
        elif not acceptable:
            continue
        # the radius is down to rho and the simplex is sound: refine rho
        if rho <= cfg.rho_end:
            return "rho_end"
        rho *= 0.5
        if rho <= 1.5 * cfg.rho_end:
            rho = cfg.rho_end
        delta = max(delta * 0.5, rho)


def _nelder_mead(f, x0: np.ndarray, cfg: OptimizerConfig) -> str:
    d = x0.size
    sim = np.vstack([x0, x0 + cfg.rho_begin * np.eye(d)])
    fs = np.array([f(x) for x in sim])
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        if np.max(np.linalg.norm(sim[1:] - sim[0], axis=1)) <= cfg.rho_end:
            return "rho_end"
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = f(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = f(xe)
            sim[-1], fs[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            outside = fr < fs[-1]
            xc = centroid + 0.5 * ((xr if outside else sim[-1]) - centroid)
            fc = f(xc)
            if fc < min(fr, fs[-1]):
                sim[-1], fs[-1] = xc, fc
            else:
                for i in range(1, d + 1):
                    sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
                    fs[i] = f(sim[i])
