"""
Deterministic first-order optimizers over a flat parameter vector.

`f(θ)` must return (loss, grad). The evaluation budget counts calls to f.
"""
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import line_search

from src.errors import ArgumentError, NonFiniteLossError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "lbfgs"
    max_evals: int = 3000
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-12
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    clip: float | None = None
    log_every: int = 100

    def __post_init__(self):
        if self.method not in ("lbfgs", "adam"):
            raise ArgumentError(f"Unknown optimizer {self.method!r}")
        if self.max_evals < 0 or self.memory < 1:
            raise ArgumentError("Optimizer limits must be positive")
        if not 0 < self.c1 < self.c2 < 1:
            raise ArgumentError("Wolfe constants need 0 < c1 < c2 < 1")


@dataclass
class History:
    rows: list = field(default_factory=list)
    status: str = "running"
    best_loss: float = np.inf

    def record(self, it, loss, gradnorm, fevals, seconds):
        self.rows.append({
            "iter": it, "loss": loss, "gradnorm": gradnorm,
            "fevals": fevals, "seconds": seconds,
        })

    @property
    def losses(self):
        return np.array([r["loss"] for r in self.rows])

    def to_frame(self):
        return pd.DataFrame(self.rows, columns=["iter", "loss", "gradnorm", "fevals", "seconds"])

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)


class _BudgetExhausted(Exception):
    pass


class _Objective:
    """Caches the last (loss, grad), counts calls and tracks the best point."""

    def __init__(self, f, max_evals, clip):
        self.f = f
        self.max_evals = max_evals
        self.clip = clip
        self.n_evals = 0
        self._key = None
        self._value = None
        self.best_x = None
        self.best_loss = np.inf

    def __call__(self, x):
        key = x.tobytes()
        if key == self._key:
            return self._value
        if self.n_evals >= self.max_evals:
            raise _BudgetExhausted
        self.n_evals += 1
        try:
            loss, grad = self.f(x)
            grad = np.asarray(grad, dtype=float)
        except NonFiniteLossError as exc:
            logger.debug(f"Non-finite loss treated as +inf: {exc}")
            loss, grad = np.inf, np.zeros_like(x)
        if not np.isfinite(loss):
            loss, grad = np.inf, np.zeros_like(x)
        if self.clip is not None:
            norm = np.linalg.norm(grad)
            if norm > self.clip:
                grad = grad * (self.clip / norm)
        if loss < self.best_loss:
            self.best_loss, self.best_x = float(loss), x.copy()
        self._key, self._value = key, (float(loss), grad)
        return self._value

    def loss(self, x):
        return self(x)[0]

    def grad(self, x):
        return self(x)[1]


def _two_loop(g, s_list, y_list):
    """L-BFGS inverse-Hessian product -H g."""
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_list), reversed(y_list)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_list:
        s, y = s_list[-1], y_list[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(s_list, y_list), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _lbfgs(obj: _Objective, x0, config: OptimizerConfig, history: History):
    started = time.perf_counter()
    x = np.asarray(x0, dtype=float).copy()
    f, g = obj(x)
    if not np.isfinite(f):
        history.status = "non-finite-start"
        return x
    history.record(0, f, float(np.linalg.norm(g)), obj.n_evals, 0.0)
    s_list, y_list = [], []
    old_f = f + np.linalg.norm(g) / 2.0
    it = 0

    while True:
        if np.linalg.norm(g) < config.gtol:
            history.status = "converged"
            return x
        p = _two_loop(g, s_list, y_list)
        if p @ g >= 0:
            s_list, y_list = [], []
            p = -g
        alpha, _, _, f_new, _, _ = line_search(
            obj.loss, obj.grad, x, p, gfk=g, old_fval=f, old_old_fval=old_f,
            c1=config.c1, c2=config.c2,
        )
        if alpha is None and s_list:
            # retry once along steepest descent with fresh memory
            s_list, y_list = [], []
            p = -g
            alpha, _, _, f_new, _, _ = line_search(
                obj.loss, obj.grad, x, p, gfk=g, old_fval=f, old_old_fval=f + np.linalg.norm(g) / 2.0,
                c1=config.c1, c2=config.c2,
            )
        if alpha is None or not np.isfinite(f_new):
            history.status = "line-search-failed"
            return x

        x_new = x + alpha * p
        f_new, g_new = obj(x_new)
        s, y = x_new - x, g_new - g
        if s @ y > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_list.append(s)
            y_list.append(y)
            if len(s_list) > config.memory:
                s_list.pop(0)
                y_list.pop(0)
        old_f = f
        x, f, g = x_new, f_new, g_new
        it += 1
        history.record(it, f, float(np.linalg.norm(g)), obj.n_evals, time.perf_counter() - started)
        if config.log_every and it % config.log_every == 0:
            logger.info(f"L-BFGS progress: iter {it}, loss {f:.6e}, evals {obj.n_evals}/{obj.max_evals}")


def _adam(obj: _Objective, x0, config: OptimizerConfig, history: History):
    started = time.perf_counter()
    x = np.asarray(x0, dtype=float).copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = config.beta1, config.beta2, 1e-8
    it = 0
    while True:
        f, g = obj(x)
        history.record(it, f, float(np.linalg.norm(g)), obj.n_evals, time.perf_counter() - started)
        if np.linalg.norm(g) < config.gtol and np.isfinite(f):
            history.status = "converged"
            return x
        it += 1
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g ** 2
        m_hat = m / (1.0 - b1 ** it)
        v_hat = v / (1.0 - b2 ** it)
        x = x - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        if config.log_every and it % config.log_every == 0:
            logger.info(f"Adam progress: iter {it}, loss {f:.6e}")


def minimize(f, theta0, config: OptimizerConfig = OptimizerConfig()):
    """
    Minimize f from θ0.

    Returns the best iterate seen and the History; history.status is one
    of converged, max-evals, line-search-failed or non-finite-start.
    """
    theta0 = np.asarray(theta0, dtype=float)
    history = History()
    if config.max_evals == 0:
        history.status = "max-evals"
        return theta0.copy(), history

    obj = _Objective(f, config.max_evals, config.clip)
    run = _lbfgs if config.method == "lbfgs" else _adam
    try:
        run(obj, theta0, config, history)
    except _BudgetExhausted:
        history.status = "max-evals"

    history.best_loss = obj.best_loss
    best = obj.best_x if obj.best_x is not None else theta0.copy()
    logger.info(
        f"{config.method} finished ({history.status}): loss {obj.best_loss:.6e} "
        f"after {obj.n_evals} evaluations"
    )
    return best, history
