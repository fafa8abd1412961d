"""Acquisition functions and the sequential optimization loop.

The loop proposes points by maximizing an acquisition surface over an
axis-aligned box, evaluates the objective, and folds the result back into
the posterior.  An ask/tell split exposes the same cycle to callers that
run experiments out of process, with JSON session files for persistence.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import Bounds, minimize
from scipy.special import ndtr
from scipy.stats import qmc

from .gp import GpPosterior, Observations

logger = logging.getLogger(__name__)

ACQUISITION_KINDS = ("ei", "ucb")

# Relative spread below which the probe values count as a flat surface.
FLAT_TOL = 1e-12

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class AcquisitionSpec:
    """Which acquisition to use and the constants its schedule needs."""

    kind: str
    dim: int
    delta: float = 0.1

    def __post_init__(self) -> None:
        if self.kind not in ACQUISITION_KINDS:
            raise ValueError(f"unknown acquisition kind {self.kind!r}")
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 1:
            raise ValueError("dim must be a positive integer")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box domain; bounds are per-coordinate arrays."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.ndim != 1 or lo.shape != hi.shape:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo >= hi):
            raise ValueError("each lower bound must be below its upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, dim: int) -> "Box":
        return cls(-np.ones(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)


def beta_t(t: int, dim: int, delta: float) -> float:
    """Confidence-width schedule: 2 log(n (t+1)^2 pi^2 / (6 delta))."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie strictly inside (0, 1)")
    return 2.0 * math.log(dim * (t + 1) ** 2 * math.pi**2 / (6.0 * delta))


def _phi(z: np.ndarray) -> np.ndarray:
    # huge |z| overflows z*z before exp flushes to 0; the limit is exact
    with np.errstate(over="ignore"):
        return np.exp(-0.5 * z * z) / _SQRT_2PI


def ei(mean, sd, y_plus):
    """Expected improvement over y_plus; the sd = 0 case is the pointwise limit.

    Accepts scalars or arrays (broadcast together); never returns a negative
    value.
    """
    mean_in = np.asarray(mean, dtype=float)
    sd_in = np.asarray(sd, dtype=float)
    scalar = mean_in.ndim == 0 and sd_in.ndim == 0
    mean_a, sd_a = np.broadcast_arrays(np.atleast_1d(mean_in), np.atleast_1d(sd_in))
    if np.any(sd_a < 0):
        raise ValueError("sd must be nonnegative")
    diff = mean_a - float(y_plus)
    out = np.maximum(diff, 0.0)  # exact limit where sd == 0
    pos = sd_a > 0
    if np.any(pos):
        with np.errstate(over="ignore"):
            z = diff[pos] / sd_a[pos]
        out[pos] = diff[pos] * ndtr(z) + sd_a[pos] * _phi(z)
    out = np.maximum(out, 0.0)
    if scalar:
        return float(out[0])
    return out


def ucb(mean, sd, t: int, spec: AcquisitionSpec, beta: Optional[float] = None):
    """Upper confidence bound mean + sqrt(beta_t) sd.

    `beta` overrides the schedule; useful for pinning the width in tests.
    """
    mean_a, sd_a = np.broadcast_arrays(
        np.asarray(mean, dtype=float), np.asarray(sd, dtype=float)
    )
    if np.any(sd_a < 0):
        raise ValueError("sd must be nonnegative")
    if beta is None:
        beta = beta_t(t, spec.dim, spec.delta)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    out = mean_a + math.sqrt(beta) * sd_a
    if out.ndim == 0:
        return float(out)
    return out


@dataclass
class BoSession:
    """Mutable state of one optimization run; single-writer."""

    gp: GpPosterior
    acquisition: AcquisitionSpec
    domain: Box
    rng_seed: int
    iteration: int = 0
    pending: Optional[np.ndarray] = None
    d0_size: int = 0
    model_ref: Optional[str] = None

    def __post_init__(self) -> None:
        if self.domain.dim != self.acquisition.dim:
            raise ValueError("domain and acquisition dimensions disagree")
        if self.iteration < 0:
            raise ValueError("iteration must be nonnegative")

    @property
    def best_so_far(self) -> Optional[tuple]:
        """(x, y) with the largest observed value, or None before any data."""
        obs = self.gp.obs
        if obs.size == 0:
            return None
        i = int(np.argmax(obs.values))
        return obs.points[i].copy(), float(obs.values[i])


def new_session(
    kernel,
    acquisition: AcquisitionSpec,
    seed: int,
    noise_var: float,
    init_points,
    init_values,
    domain: Optional[Box] = None,
    model_ref: Optional[str] = None,
) -> BoSession:
    """Start a session from an initial design (which may be empty)."""
    init_points = np.asarray(init_points, dtype=float).reshape(-1, acquisition.dim)
    init_values = np.asarray(init_values, dtype=float).reshape(-1)
    gp = GpPosterior.from_data(kernel, init_points, init_values, noise_var)
    return BoSession(
        gp=gp,
        acquisition=acquisition,
        domain=domain if domain is not None else Box.unit(acquisition.dim),
        rng_seed=int(seed),
        iteration=0,
        d0_size=init_values.shape[0],
        model_ref=model_ref,
    )


def rng_for(seed: int, iteration: int) -> np.random.Generator:
    """Independent stream per (seed, iteration); stable across platforms."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(iteration)]))


def _acquisition_values(session: BoSession, X: np.ndarray, y_plus) -> np.ndarray:
    mean, var = session.gp.posterior_batch(X)
    sd = np.sqrt(np.clip(var, 0.0, None))
    if session.acquisition.kind == "ei":
        return np.atleast_1d(ei(mean, sd, y_plus))
    return np.atleast_1d(ucb(mean, sd, session.iteration, session.acquisition))


def maximize_acquisition(
    session: BoSession, refine_top: Optional[int] = None
) -> np.ndarray:
    """Pick the next evaluation point inside the session's box.

    Seeds 32 n Latin-hypercube probes from the session stream, scores them
    in one batch, then polishes starts with bounded Nelder-Mead.  With
    `refine_top` set, only that many of the best probes are polished; the
    returned point still scores at least as high as every raw probe.  A
    flat surface (or expected improvement before any data exists) falls
    back to a seeded uniform point and logs a warning.
    """
    spec = session.acquisition
    dom = session.domain
    rng = rng_for(session.rng_seed, session.iteration)

    obs = session.gp.obs
    if spec.kind == "ei" and obs.size == 0:
        logger.warning(
            "expected improvement is undefined with no observations; "
            "returning a seeded random point"
        )
        return dom.clip(rng.uniform(dom.lo, dom.hi))
    y_plus = float(np.max(obs.values)) if obs.size else None

    n_probes = 32 * spec.dim
    sampler = qmc.LatinHypercube(d=spec.dim, seed=rng)
    probes = dom.lo + sampler.random(n_probes) * (dom.hi - dom.lo)
    values = _acquisition_values(session, probes, y_plus)

    vmax = float(np.max(values))
    vmin = float(np.min(values))
    if vmax - vmin <= FLAT_TOL * max(1.0, abs(vmax)):
        logger.warning(
            "acquisition surface is flat over the probe set; "
            "returning a seeded random point"
        )
        return dom.clip(rng.uniform(dom.lo, dom.hi))

    def negated(x: np.ndarray) -> float:
        xc = dom.clip(x)
        return -float(_acquisition_values(session, xc[None, :], y_plus)[0])

    order = np.argsort(-values)
    if refine_top is not None:
        if refine_top < 1:
            raise ValueError("refine_top must be at least 1")
        order = order[:refine_top]

    best_x = probes[int(order[0])]
    best_v = float(values[int(order[0])])
    for idx in order:
        res = minimize(
            negated,
            probes[int(idx)],
            method="Nelder-Mead",
            bounds=Bounds(dom.lo, dom.hi),
            options={"maxiter": 200, "xatol": 1e-8, "fatol": 1e-8},
        )
        cand = dom.clip(res.x)
        val = -negated(cand)
        if val > best_v:
            best_x, best_v = cand, val
    return dom.clip(best_x)


def ask(session: BoSession, refine_top: Optional[int] = None) -> np.ndarray:
    """Suggest the next point; repeated calls return the stored suggestion."""
    if session.pending is not None:
        return session.pending.copy()
    x = maximize_acquisition(session, refine_top=refine_top)
    session.pending = x.copy()
    return x


def tell(session: BoSession, x, y: float) -> BoSession:
    """Record an observation and advance the iteration counter.

    Points that were never suggested (or differ from the pending
    suggestion) are accepted as external data but logged, since the
    surrogate they were chosen under is unknown.  Any pending suggestion
    is cleared: new data invalidates it.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != session.acquisition.dim:
        raise ValueError(
            f"point has dimension {x.shape[0]}, session expects "
            f"{session.acquisition.dim}"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("point coordinates must be finite")
    if not session.domain.contains(x):
        raise ValueError("point lies outside the session domain")
    y = float(y)
    if not math.isfinite(y):
        raise ValueError("observed value must be finite")

    if session.pending is None:
        logger.warning("observation arrived without a pending suggestion")
    elif not np.array_equal(x, session.pending):
        logger.warning("observation does not match the pending suggestion")
    session.gp = session.gp.add_observation(x, y)
    session.iteration += 1
    session.pending = None
    return session


def bo_step(
    session: BoSession,
    objective: Callable[[np.ndarray], float],
    refine_top: Optional[int] = None,
) -> BoSession:
    """One select / evaluate / update cycle."""
    x = ask(session, refine_top=refine_top)
    return tell(session, x, float(objective(x)))


def run_loop(
    session: BoSession,
    objective: Callable[[np.ndarray], float],
    steps: int,
    refine_top: Optional[int] = None,
) -> BoSession:
    """Run `steps` cycles and return the final session."""
    for _ in range(steps):
        session = bo_step(session, objective, refine_top=refine_top)
    return session


def save_session(session: BoSession, path: str) -> None:
    obs = session.gp.obs
    payload = {
        "model_ref": session.model_ref,
        "domain": {"lo": session.domain.lo.tolist(), "hi": session.domain.hi.tolist()},
        "iteration": session.iteration,
        "observations": {
            "points": obs.points.tolist(),
            "values": obs.values.tolist(),
        },
        "pending": None if session.pending is None else session.pending.tolist(),
        "seed": session.rng_seed,
        "acquisition": {
            "kind": session.acquisition.kind,
            "delta": session.acquisition.delta,
        },
        "noise_var": obs.noise_var,
    }
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def load_session(path: str, kernel) -> BoSession:
    """Rebuild a session from its JSON file; the kernel is supplied by the caller."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed session file: {exc}") from exc
    try:
        lo = np.asarray(payload["domain"]["lo"], dtype=float)
        hi = np.asarray(payload["domain"]["hi"], dtype=float)
        iteration = int(payload["iteration"])
        points = np.asarray(payload["observations"]["points"], dtype=float)
        values = np.asarray(payload["observations"]["values"], dtype=float)
        pending = payload["pending"]
        seed = int(payload["seed"])
        kind = payload["acquisition"]["kind"]
        delta = float(payload["acquisition"]["delta"])
        noise_var = float(payload["noise_var"])
        model_ref = payload["model_ref"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed session file: missing {exc}") from exc
    dim = lo.shape[0] if lo.ndim == 1 else 0
    points = points.reshape(-1, dim) if points.size else np.zeros((0, dim))
    values = values.reshape(-1)
    if points.shape[0] != values.shape[0]:
        raise ValueError("malformed session file: observation arrays disagree")
    if iteration < 0 or iteration > points.shape[0]:
        raise ValueError("malformed session file: iteration exceeds observations")
    spec = AcquisitionSpec(kind=kind, dim=dim, delta=delta)
    session = BoSession(
        gp=GpPosterior.from_data(kernel, points, values, noise_var),
        acquisition=spec,
        domain=Box(lo, hi),
        rng_seed=seed,
        iteration=iteration,
        d0_size=points.shape[0] - iteration,
        model_ref=model_ref,
    )
    if pending is not None:
        pend = np.asarray(pending, dtype=float).reshape(-1)
        if pend.shape[0] != dim:
            raise ValueError("malformed session file: pending point dimension")
        session.pending = pend
    return session
