"""Levenberg-Marquardt solver for stacked polynomial window systems.

A system row j reads ``sum_i C[j, i] * v[idx[j, i]] ** E[j, i] - target[j]``;
padded slots (``idx == -1``) contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import window_indices
from .errors import SolverInputError

DEFAULT_RESIDUAL_TOLERANCE = 1.49012e-08
LAMBDA_CAP = 1e12


@dataclass(frozen=True, eq=False)
class ResidualSystem:
    n_vars: int
    idx: np.ndarray  # (rows, m) int, -1 marks a padded slot
    coef: np.ndarray  # (rows, m) float
    exps: np.ndarray  # (rows, m) int
    targets: np.ndarray  # (rows,)

    def __post_init__(self):
        idx = np.asarray(self.idx, dtype=np.int64)
        if idx.ndim != 2 or idx.shape != np.shape(self.coef) or idx.shape != np.shape(self.exps):
            raise SolverInputError("idx, coef and exps must share one (rows, m) shape")
        if np.any(idx >= self.n_vars) or np.any(idx < -1):
            raise SolverInputError("variable index out of range")
        if np.shape(self.targets) != (idx.shape[0],):
            raise SolverInputError("one target per equation required")
        mask = idx >= 0
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "mask", mask)
        # padded slots point at variable 0 with a zero coefficient
        object.__setattr__(self, "_safe_idx", np.where(mask, idx, 0))
        object.__setattr__(self, "_coef", np.where(mask, np.asarray(self.coef, dtype=np.float64), 0.0))
        object.__setattr__(self, "_exps", np.where(mask, np.asarray(self.exps, dtype=np.int64), 1))

    @property
    def n_equations(self) -> int:
        return self.idx.shape[0]

    def terms(self, row: int) -> list[tuple[int, float, int]]:
        """(variable index, coefficient, exponent) of the non-padded terms of one equation."""
        return [
            (int(i), float(c), int(e))
            for i, c, e in zip(self.idx[row], self.coef[row], self.exps[row])
            if i >= 0
        ]

    def equals(self, other: ResidualSystem) -> bool:
        return (
            self.n_vars == other.n_vars
            and np.array_equal(self.idx, other.idx)
            and np.array_equal(self._coef, other._coef)
            and np.array_equal(self._exps, other._exps)
            and np.array_equal(self.targets, other.targets)
        )


def build_inversion_system(templates, params, n: int) -> ResidualSystem:
    """Stack the window equations of every (template, params) pair."""
    templates, params = list(templates), list(params)
    if not templates or len(templates) != len(params):
        raise SolverInputError("templates and params must be non-empty and aligned one-to-one")
    blocks = []
    for t, p in zip(templates, params):
        if t.source_dim != n:
            raise SolverInputError(f"template from dim {t.source_dim}, system has {n} unknowns")
        if t.overlap != p.overlap:
            raise SolverInputError(f"template overlap {t.overlap} but params overlap {p.overlap}")
        idx = window_indices(n, p.m, p.overlap)
        if idx.shape[0] != t.values.size:
            raise SolverInputError(f"template has {t.values.size} values, params imply {idx.shape[0]}")
        rows = idx.shape[0]
        blocks.append((idx, np.tile(np.asarray(p.C, float), (rows, 1)), np.tile(np.asarray(p.E), (rows, 1)), t.values))
    ms = {b[0].shape[1] for b in blocks}
    if len(ms) != 1:
        raise SolverInputError("all parameter sets must share the same m")
    return ResidualSystem(
        n,
        np.vstack([b[0] for b in blocks]),
        np.vstack([b[1] for b in blocks]),
        np.vstack([b[2] for b in blocks]),
        np.concatenate([b[3] for b in blocks]),
    )


def _check_point(sys: ResidualSystem, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (sys.n_vars,):
        raise SolverInputError(f"expected a vector of {sys.n_vars} unknowns, got shape {v.shape}")
    return v


def _residuals(sys, v):
    x = v[sys._safe_idx]
    return np.sum(sys._coef * x**sys._exps, axis=1) - sys.targets


def _jacobian(sys, v):
    x = v[sys._safe_idx]
    d = sys._coef * sys._exps * x ** (sys._exps - 1)
    J = np.zeros((sys.n_equations, sys.n_vars))
    rows = np.broadcast_to(np.arange(sys.n_equations)[:, None], sys.idx.shape)
    # accumulate: a hand-built row may mention one variable more than once
    np.add.at(J, (rows[sys.mask], sys.idx[sys.mask]), d[sys.mask])
    return J


def evaluate_residuals(sys: ResidualSystem, v) -> np.ndarray:
    return _residuals(sys, _check_point(sys, v))


def evaluate_jacobian(sys: ResidualSystem, v) -> np.ndarray:
    return _jacobian(sys, _check_point(sys, v))


@dataclass(frozen=True)
class SolverConfig:
    residual_tolerance: float = DEFAULT_RESIDUAL_TOLERANCE
    max_iterations: int = 200
    lambda_init: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    step_tolerance: float = 1e-12

    def __post_init__(self):
        for name in ("residual_tolerance", "max_iterations", "lambda_init", "lambda_up", "lambda_down", "step_tolerance"):
            if not getattr(self, name) > 0:
                raise SolverInputError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SolverResult:
    success: bool
    solution: np.ndarray
    residual_norm: float
    iterations: int
    guesses_consumed: int
    history: list[float] = field(default_factory=list)  # accepted-step residual 2-norms, returned guess

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "guesses_consumed": self.guesses_consumed,
        }


def _solve_one(sys, v, cfg):
    r = _residuals(sys, v)
    norm = float(np.linalg.norm(r))
    history = [norm]
    lam = cfg.lambda_init
    iterations = 0
    J = None
    scale = np.zeros(sys.n_vars)
    while iterations < cfg.max_iterations:
        if np.max(np.abs(r)) <= cfg.residual_tolerance:
            break
        if J is None:
            J = _jacobian(sys, v)
            A = J.T @ J
            g = J.T @ r
            # running maximum of column scales (MINPACK): a column whose
            # gradient collapses towards zero keeps its earlier damping
            scale = np.maximum(scale, np.diag(A))
            floor = max(scale.max(), 1.0) * 1e-12
            scale = np.maximum(scale, floor)
        iterations += 1
        try:
            factor = cho_factor(A + lam * np.diag(scale), check_finite=False)
            step = -cho_solve(factor, g, check_finite=False)
        except (LinAlgError, ValueError):
            step = None
        if step is None or not np.all(np.isfinite(step)):
            lam *= cfg.lambda_up
            if lam > LAMBDA_CAP:
                break
            continue
        v_new = v + step
        with np.errstate(over="ignore", invalid="ignore"):
            r_new = _residuals(sys, v_new)
        norm_new = float(np.linalg.norm(r_new)) if np.all(np.isfinite(r_new)) else np.inf
        if norm_new < norm:
            v, r, norm = v_new, r_new, norm_new
            history.append(norm)
            lam /= cfg.lambda_down
            J = None
            if np.linalg.norm(step) <= cfg.step_tolerance:
                break
        else:
            lam *= cfg.lambda_up
            if lam > LAMBDA_CAP or np.linalg.norm(step) <= cfg.step_tolerance:
                break
    return v, r, iterations, history


def solve_lm(sys: ResidualSystem, initial_guesses, cfg: SolverConfig | None = None) -> SolverResult:
    """Try each initial guess in turn; stop at the first one that drives the
    residual infinity-norm below ``cfg.residual_tolerance``.

    Without any success the lowest-residual iterate is returned with
    ``success=False``.
    """
    cfg = cfg or SolverConfig()
    guesses = np.atleast_2d(np.asarray(initial_guesses, dtype=np.float64))
    if guesses.shape[0] < 1 or guesses.shape[1] != sys.n_vars:
        raise SolverInputError(f"need >= 1 guess of length {sys.n_vars}, got shape {guesses.shape}")
    best = None
    for k, guess in enumerate(guesses, start=1):
        v, r, iterations, history = _solve_one(sys, guess.copy(), cfg)
        norm = float(np.max(np.abs(r))) if r.size else 0.0
        if norm <= cfg.residual_tolerance:
            return SolverResult(True, v, norm, iterations, k, history)
        if best is None or norm < best.residual_norm:
            best = SolverResult(False, v, norm, iterations, k, history)
    best.guesses_consumed = guesses.shape[0]
    return best
