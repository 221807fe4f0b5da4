"""Adaptive forward-backward reconstruction with extrapolation.

Each iteration takes a fidelity gradient step, then a penalty gradient
step, keeps the combined step only if it decreases the objective enough,
otherwise falls back to a backtracked full-gradient step, then tries an
extrapolated point and adapts the extrapolation factor based on whether
that point was kept.  The smoothing parameter of the penalty decays
geometrically whenever the iterate is close to stationary at the current
smoothing level, and the run stops once it falls below a threshold.

The objective value never increases between consecutive iterations at a
fixed smoothing level; every accepted step satisfies an explicit
sufficient-decrease test, so the invariant holds in exact float
comparisons, not just approximately.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericalFailure, ParameterError
from .model import ForwardModel, Objective, Regularizer
from .numerics import norm2

_MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class PhaseSchedule:
    """Per-iteration step sizes (fidelity, penalty, fallback).

    ``entries[k]`` supplies iteration k; iterations past the end reuse the
    last entry, so a single-entry schedule is a constant one.
    """

    entries: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if len(self.entries) == 0:
            raise ParameterError("schedule needs at least one entry")
        norm = []
        for e in self.entries:
            if len(e) != 3:
                raise ParameterError(f"schedule entries are (alpha, beta, gamma) triples, got {e!r}")
            triple = tuple(float(v) for v in e)
            if not all(np.isfinite(v) and v > 0.0 for v in triple):
                raise ParameterError(f"step sizes must be finite and > 0, got {e!r}")
            norm.append(triple)
        object.__setattr__(self, "entries", tuple(norm))

    @classmethod
    def constant(cls, alpha: float, beta: float, gamma: float) -> "PhaseSchedule":
        return cls(entries=((alpha, beta, gamma),))

    def at(self, k: int) -> tuple[float, float, float]:
        return self.entries[min(k, len(self.entries) - 1)]

    def to_dict(self) -> dict:
        return {"entries": [list(e) for e in self.entries]}

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseSchedule":
        if "entries" in d:
            return cls(entries=tuple(tuple(e) for e in d["entries"]))
        try:
            return cls.constant(d["alpha"], d["beta"], d["gamma"])
        except KeyError as exc:
            raise ParameterError(f"schedule needs 'entries' or alpha/beta/gamma, missing {exc}") from None


def _in_open_unit(name: str, v: float) -> float:
    v = float(v)
    if not (np.isfinite(v) and 0.0 < v < 1.0):
        raise ParameterError(f"{name} must lie in (0, 1), got {v}")
    return v


@dataclass(frozen=True)
class SolverConfig:
    """Solver hyperparameters; values are validated on construction."""

    eta0: float = 1.0
    tau0: float = 0.5
    sigma: float = 0.5
    mu: float = 0.5
    delta: float = 0.1
    epsilon: float = 1e-3
    max_iters: int = 200
    schedule: PhaseSchedule = field(default_factory=lambda: PhaseSchedule.constant(1.0, 1.0, 1.0))

    def __post_init__(self):
        if not (np.isfinite(self.eta0) and self.eta0 > 0.0):
            raise ParameterError(f"eta0 must be finite and > 0, got {self.eta0}")
        _in_open_unit("tau0", self.tau0)
        _in_open_unit("sigma", self.sigma)
        _in_open_unit("mu", self.mu)
        _in_open_unit("delta", self.delta)
        if not (np.isfinite(self.epsilon) and self.epsilon > 0.0):
            raise ParameterError(f"epsilon must be finite and > 0, got {self.epsilon}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 0:
            raise ParameterError(f"max_iters must be an integer >= 0, got {self.max_iters}")
        object.__setattr__(self, "max_iters", int(self.max_iters))

    def replace(self, **changes) -> "SolverConfig":
        from dataclasses import replace as _replace
        return _replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "eta0": self.eta0, "tau0": self.tau0, "sigma": self.sigma, "mu": self.mu,
            "delta": self.delta, "epsilon": self.epsilon, "max_iters": self.max_iters,
            "schedule": self.schedule.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolverConfig":
        d = dict(d)
        sched = d.pop("schedule", None)
        known = {"eta0", "tau0", "sigma", "mu", "delta", "epsilon", "max_iters"}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown solver config keys: {sorted(unknown)}")
        if sched is not None:
            d["schedule"] = PhaseSchedule.from_dict(sched)
        return cls(**d)


@dataclass
class IterationRecord:
    """One iteration of the solve, as logged.

    ``phi`` and ``grad_norm`` are measured at the accepted iterate under
    the smoothing level the iteration ran with (``eta_used``); ``eta`` and
    ``tau`` hold the post-update values.  ``n_value_evals`` and
    ``n_grad_evals`` count objective / gradient evaluations this iteration
    (a value or gradient needing both fidelity and penalty parts at one
    point counts once).
    """

    k: int
    phi: float
    grad_norm: float
    eta: float
    tau: float
    branch: str
    extrapolation_accepted: bool
    eta_decayed: bool
    ms: float
    eta_used: float
    n_value_evals: int
    n_grad_evals: int


_CSV_COLUMNS = ("k", "phi", "grad_norm", "eta", "tau", "branch", "eta_decayed", "ms")


@dataclass
class SolverTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def append(self, rec: IterationRecord):
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_CSV_COLUMNS)
            for r in self.records:
                w.writerow([r.k, repr(r.phi), repr(r.grad_norm), repr(r.eta), repr(r.tau),
                            r.branch, int(r.eta_decayed), repr(r.ms)])


def reconstruct(obj: Objective, cfg: SolverConfig, x0: np.ndarray | None = None):
    """Run the adaptive scheme; returns (final iterate, trace).

    Starts from the adjoint of the measurements when ``x0`` is omitted.
    Raises :class:`NumericalFailure` (carrying the partial trace) if the
    objective turns non-finite or no descent step can be found.
    """
    # Divergence shows up as non-finite objective values, which are checked
    # explicitly; keep numpy quiet about the overflows on the way there.
    with np.errstate(over="ignore", invalid="ignore"):
        return _reconstruct(obj, cfg, x0)


def _reconstruct(obj: Objective, cfg: SolverConfig, x0: np.ndarray | None):
    model = obj.model
    if x0 is None:
        x = model.zero_filled()
    else:
        x = np.array(x0, dtype=np.complex128, copy=True)
        if x.shape != model.shape:
            raise DimensionError(f"x0 shape {x.shape} does not match model {model.shape}")

    weight = obj.weight
    trace = SolverTrace()
    eta = float(cfg.eta0)
    tau = float(cfg.tau0)

    def parts_value(fid, pen):
        return fid + weight * pen

    fid_x = model.fidelity(x)
    pen_x = obj.penalty_part(x, eta)
    phi_x = parts_value(fid_x, pen_x)
    if not np.isfinite(phi_x):
        raise NumericalFailure("objective is non-finite at the starting point", trace)
    grad_fid_x = model.grad_fidelity(x)
    grad_pen_x = None  # penalty gradient at x, valid for eta == grad_eta_tag
    grad_eta_tag = None

    for k in range(cfg.max_iters):
        t0 = time.perf_counter()
        n_val = 0
        n_grad = 0
        alpha, beta, gamma0 = cfg.schedule.at(k)

        z = x - alpha * grad_fid_x
        if weight != 0.0:
            u = z - beta * weight * obj.reg.grad(z, eta)
            n_grad += 1
        else:
            u = z

        fid_u = model.fidelity(u)
        pen_u = obj.penalty_part(u, eta)
        n_val += 1
        phi_u = parts_value(fid_u, pen_u)
        if not np.isfinite(phi_u):
            raise NumericalFailure(f"objective is non-finite at iteration {k}", trace)

        if phi_u <= phi_x - 0.5 * cfg.delta * norm2(u - x) ** 2:
            branch = "sufficient_decrease"
            xbar, fid_bar, pen_bar = u, fid_u, pen_u
        else:
            branch = "fallback"
            if weight != 0.0 and (grad_pen_x is None or grad_eta_tag != eta):
                grad_pen_x = obj.reg.grad(x, eta)
                grad_eta_tag = eta
                n_grad += 1
            g_x = grad_fid_x if weight == 0.0 else grad_fid_x + weight * grad_pen_x
            gamma = gamma0
            for _ in range(_MAX_BACKTRACKS + 1):
                xbar = x - gamma * g_x
                fid_bar = model.fidelity(xbar)
                pen_bar = obj.penalty_part(xbar, eta)
                n_val += 1
                phi_bar = parts_value(fid_bar, pen_bar)
                if np.isfinite(phi_bar) and phi_bar <= phi_x - 0.5 * cfg.delta * norm2(xbar - x) ** 2:
                    break
                gamma *= 0.5
            else:
                raise NumericalFailure(
                    f"no descent step found at iteration {k} after {_MAX_BACKTRACKS} backtracks", trace)
        phi_bar = parts_value(fid_bar, pen_bar)

        y = xbar + tau * (xbar - x)
        fid_y = model.fidelity(y)
        pen_y = obj.penalty_part(y, eta)
        n_val += 1
        phi_y = parts_value(fid_y, pen_y)
        if not np.isfinite(phi_y):
            raise NumericalFailure(f"objective is non-finite at iteration {k}", trace)

        if phi_y <= phi_bar:
            x_next, fid_next, pen_next = y, fid_y, pen_y
            accepted = True
            tau = min(tau / cfg.mu, 1.0)
        else:
            x_next, fid_next, pen_next = xbar, fid_bar, pen_bar
            accepted = False
            tau = cfg.mu * tau

        grad_fid_next = model.grad_fidelity(x_next)
        if weight != 0.0:
            grad_pen_next = obj.reg.grad(x_next, eta)
            g_norm = norm2(grad_fid_next + weight * grad_pen_next)
        else:
            grad_pen_next = None
            g_norm = norm2(grad_fid_next)
        n_grad += 1
        if not np.isfinite(g_norm):
            raise NumericalFailure(f"gradient is non-finite at iteration {k}", trace)

        eta_used = eta
        decayed = g_norm < cfg.sigma * eta
        if decayed:
            eta = cfg.sigma * eta

        x = x_next
        fid_x = fid_next
        pen_x = pen_next
        grad_fid_x = grad_fid_next
        grad_pen_x = grad_pen_next
        grad_eta_tag = eta_used
        if decayed and weight != 0.0:
            pen_x = obj.reg.value(x, eta)
            n_val += 1
        phi_x = parts_value(fid_x, pen_x)
        if not np.isfinite(phi_x):
            raise NumericalFailure(f"objective is non-finite at iteration {k}", trace)

        trace.append(IterationRecord(
            k=k, phi=parts_value(fid_next, pen_next), grad_norm=g_norm, eta=eta, tau=tau,
            branch=branch, extrapolation_accepted=accepted, eta_decayed=decayed,
            ms=(time.perf_counter() - t0) * 1e3, eta_used=eta_used,
            n_value_evals=n_val, n_grad_evals=n_grad))

        if eta < cfg.epsilon:
            break

    return x, trace


def default_config(model: ForwardModel, lambda_r: float = 1e-3) -> SolverConfig:
    """Reasonable defaults sized to the given model.

    The fidelity step is 1/L with L from power iteration; the penalty step
    is eta0 / (8 * lambda_r) capped at 1, since the squared norm of the
    periodic difference operator is at most 8; the fallback step starts at
    the fidelity step.
    """
    lip = model.lipschitz_estimate()
    alpha = 1.0 / lip if lip > 0.0 else 1.0
    eta0 = 1.0
    beta = min(eta0 / (8.0 * lambda_r), 1.0) if lambda_r > 0.0 else 1.0
    return SolverConfig(
        eta0=eta0, tau0=0.5, sigma=0.5, mu=0.5, delta=0.1, epsilon=1e-3, max_iters=200,
        schedule=PhaseSchedule.constant(alpha, beta, alpha))


@dataclass
class TaskSpec:
    """One scoring task: measurements plus the reference to score against."""

    mask: object
    coilset: object
    reference: np.ndarray

    def __post_init__(self):
        ref = np.asarray(self.reference, dtype=np.complex128)
        if ref.ndim != 2:
            raise DimensionError(f"reference must be 2-D, got shape {ref.shape}")
        if ref.shape != self.coilset.shape:
            raise DimensionError(
                f"reference shape {ref.shape} does not match coil maps {self.coilset.shape}")
        if ref.shape != self.mask.shape:
            raise DimensionError(f"reference shape {ref.shape} does not match mask {self.mask.shape}")
        if self.coilset.kspace is None:
            raise ParameterError("task coil set has no k-space data")
        self.reference = ref


@dataclass(frozen=True)
class ScoreEntry:
    task_index: int
    candidate_index: int
    score: float
    failed: bool


_ADAPT_METRICS = ("psnr", "ssim", "relerr")


def adapt(tasks, candidates, metric: str = "psnr", reg: Regularizer | None = None):
    """Pick the candidate config with the best mean score across tasks.

    Every (task, candidate) pair is solved and scored; candidates whose
    solve fails numerically get a worst-possible sentinel for that task
    instead of aborting the search.  Ties go to the earliest candidate.
    Returns (best config, list of ScoreEntry).
    """
    from .metrics import magnitude, psnr, relative_error, ssim

    if metric not in _ADAPT_METRICS:
        raise ParameterError(f"unknown adaptation metric {metric!r}; expected one of {_ADAPT_METRICS}")
    tasks = list(tasks)
    candidates = list(candidates)
    if not tasks:
        raise ParameterError("adaptation needs at least one task")
    if not candidates:
        raise ParameterError("adaptation needs at least one candidate config")

    higher_better = metric != "relerr"
    sentinel = -np.inf if higher_better else np.inf

    def score_one(task, recon):
        if metric == "psnr":
            return psnr(magnitude(task.reference), magnitude(recon))
        if metric == "ssim":
            return ssim(magnitude(task.reference), magnitude(recon))
        return relative_error(task.reference, recon)

    table = []
    means = []
    for ci, cfg in enumerate(candidates):
        scores = []
        for ti, task in enumerate(tasks):
            fm = ForwardModel.from_coilset(task.coilset, task.mask)
            obj = Objective(fm, reg)
            try:
                xk, _ = reconstruct(obj, cfg)
                s = float(score_one(task, xk))
                failed = False
            except NumericalFailure:
                s = sentinel
                failed = True
            table.append(ScoreEntry(task_index=ti, candidate_index=ci, score=s, failed=failed))
            scores.append(s)
        means.append(float(np.mean(scores)))

    best = 0
    for ci in range(1, len(candidates)):
        if (means[ci] > means[best]) if higher_better else (means[ci] < means[best]):
            best = ci
    return candidates[best], table
