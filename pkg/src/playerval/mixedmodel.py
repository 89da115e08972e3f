"""Linear mixed model with nested random intercepts, fitted by REML.

The model is ``y = X b + Z_league u_league + Z_club u_club + e`` with
independent normal intercepts per league and per club-within-league.  The
variance parameters are the ratios ``theta_k = var_k / var_residual``;
``var_residual`` and ``b`` are profiled out of the restricted likelihood.

Internally ``X`` (apart from the intercept) and ``y`` are centred and scaled
before forming cross-products.  The criterion, coefficients and covariances
are mapped back to the original units exactly.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg, optimize, stats

logger = logging.getLogger(__name__)

FIT_FORMAT = "playerval.lmm"
FIT_VERSION = 1
THETA_FLOOR = 1e-10
THETA_CEIL = 1e8
INTERCEPT = "(Intercept)"

DEFAULT_FIXED_EFFECTS = (
    "Current_Age", "POS", "grade_value", "Starts", "Min", "Gls", "Ast", "CrdY", "CrdR",
    "SoT", "G_Sh", "Pass_Att", "Cmp_per", "TklW", "Blocks", "Int", "Clr",
    "Dribble_Att", "Dribble_Succ_per", "Carries", "Targ", "Rec_per",
)


class MixedModelError(ValueError):
    pass


class NestingError(MixedModelError):
    pass


class RankDeficientError(MixedModelError):
    pass


class FitError(MixedModelError):
    """Optimiser failure; carries the best point seen."""

    def __init__(self, message, best_theta=None, best_criterion=None, n_iter=None):
        super().__init__(message)
        self.best_theta = best_theta
        self.best_criterion = best_criterion
        self.n_iter = n_iter


@dataclass(frozen=True)
class MixedModelSpec:
    response: str = "WEEKLY_GROSS"
    fixed_effects: tuple = DEFAULT_FIXED_EFFECTS
    grouping: tuple = ("League_num", "Club_num")  # outer level first

    def __post_init__(self):
        object.__setattr__(self, "fixed_effects", tuple(self.fixed_effects))
        object.__setattr__(self, "grouping", tuple(self.grouping))
        if not 1 <= len(self.grouping) <= 2:
            raise MixedModelError("grouping must name one or two nested levels")
        if len(set(self.fixed_effects)) != len(self.fixed_effects):
            raise MixedModelError("duplicate fixed effect names")

    def to_dict(self) -> dict:
        return {"response": self.response, "fixed_effects": list(self.fixed_effects),
                "grouping": list(self.grouping)}


def _group_codes(dataset, name: str) -> np.ndarray:
    if name == "League_num":
        return np.asarray(dataset.league_code, dtype=np.int64)
    if name == "Club_num":
        return np.asarray(dataset.club_code, dtype=np.int64)
    return np.asarray(dataset.column(name)).astype(np.int64)


class Design:
    """Fixed design, random-effect indicators and cached cross-products."""

    def __init__(self, X, fixed_names, y, group_codes: Sequence[np.ndarray],
                 group_names: Sequence[str]):
        self.X = np.asarray(X, dtype=float)
        self.fixed_names = tuple(fixed_names)
        self.y = np.asarray(y, dtype=float)
        self.group_names = tuple(group_names)
        self.group_codes = [np.asarray(c, dtype=np.int64) for c in group_codes]
        self.levels = [np.unique(c) for c in self.group_codes]
        self.Z_blocks = []
        for codes, levels in zip(self.group_codes, self.levels):
            Zk = (codes[:, None] == levels[None, :]).astype(float)
            self.Z_blocks.append(Zk)
        self.Z = np.hstack(self.Z_blocks)
        self.block_sizes = [len(lv) for lv in self.levels]
        self._prepare()

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def Z_league(self) -> np.ndarray:
        return self.Z_blocks[0]

    @property
    def Z_club(self) -> np.ndarray:
        return self.Z_blocks[-1]

    def _prepare(self):
        X, y = self.X, self.y
        n, p = X.shape
        if n <= p + 2:
            raise MixedModelError(f"need more than {p + 2} observations, got {n}")
        if self.fixed_names[0] != INTERCEPT or not np.all(X[:, 0] == 1.0):
            raise MixedModelError("first fixed column must be the intercept")
        self.x_center = X[:, 1:].mean(axis=0)
        self.x_scale = X[:, 1:].std(axis=0)
        const = [self.fixed_names[j + 1] for j in np.flatnonzero(self.x_scale == 0)]
        if const:
            raise RankDeficientError(f"fixed effect(s) {const} are constant (collinear with intercept)")
        self.y_center = float(y.mean())
        self.y_scale = float(y.std())
        if self.y_scale == 0:
            raise MixedModelError("response is constant")
        Xs = X.copy()
        Xs[:, 1:] = (X[:, 1:] - self.x_center) / self.x_scale
        ys = (y - self.y_center) / self.y_scale
        self._check_rank(Xs)
        self.Xs, self.ys = Xs, ys
        Z = self.Z
        self.ZtZ = Z.T @ Z
        self.ZtX = Z.T @ Xs
        self.Zty = Z.T @ ys
        self.XtX = Xs.T @ Xs
        self.Xty = Xs.T @ ys
        self.yty = float(ys @ ys)
        # log|det| of the column transform and response scaling
        self.logdet_xscale = float(np.sum(np.log(self.x_scale)))
        self.log_yscale = math.log(self.y_scale)
        # affine map from standardised to original coefficients: b = a + G b_std
        G = np.zeros((p, p))
        G[0, 0] = 1.0
        G[0, 1:] = -self.x_center / self.x_scale
        G[1:, 1:] = np.diag(1.0 / self.x_scale)
        self.coef_map = self.y_scale * G
        self.coef_shift = np.zeros(p)
        self.coef_shift[0] = self.y_center

    def _check_rank(self, Xs):
        _, R, piv = linalg.qr(Xs, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = diag[0] * max(Xs.shape) * np.finfo(float).eps * 1e3
        rank = int(np.sum(diag > tol))
        if rank < Xs.shape[1]:
            bad = sorted(self.fixed_names[j] for j in piv[rank:])
            raise RankDeficientError(f"fixed design is rank deficient; collinear column(s): {bad}")

    def expand_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (len(self.block_sizes),):
            raise MixedModelError(f"theta must have {len(self.block_sizes)} entries")
        return np.repeat(theta, self.block_sizes)


@dataclass
class _Solution:
    criterion: float
    beta_std: np.ndarray
    v: np.ndarray           # spherical random effects (standardised units)
    pwrss: float
    L_M: np.ndarray
    A: np.ndarray           # X' H^-1 X, standardised
    lam: np.ndarray


def _solve(design: Design, theta) -> _Solution:
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or not np.all(np.isfinite(theta)):
        raise MixedModelError(f"variance ratios must be finite and >= 0, got {theta}")
    lam = np.sqrt(design.expand_theta(theta))
    n, p, q = design.n, design.p, design.q
    M = lam[:, None] * design.ZtZ * lam[None, :] + np.eye(q)
    try:
        L_M = linalg.cholesky(M, lower=True)
        cX = linalg.solve_triangular(L_M, lam[:, None] * design.ZtX, lower=True)
        cy = linalg.solve_triangular(L_M, lam * design.Zty, lower=True)
        A = design.XtX - cX.T @ cX
        b = design.Xty - cX.T @ cy
        R_X = linalg.cholesky(A, lower=False)
    except linalg.LinAlgError as exc:
        raise MixedModelError(f"singular system at theta={theta}: {exc}") from None
    beta = linalg.cho_solve((R_X, False), b)
    pwrss = design.yty - float(cy @ cy) - float(b @ beta)
    if not pwrss > 0:
        raise MixedModelError(f"non-positive penalised residual sum of squares at theta={theta}")
    v = linalg.solve_triangular(L_M, cy - cX @ beta, lower=True, trans="T")
    dof = n - p
    logdet_M = 2.0 * np.sum(np.log(np.diag(L_M)))
    logdet_A = 2.0 * np.sum(np.log(np.diag(R_X)))
    # original-unit corrections: X' H^-1 X picks up prod(scale)^2, pwrss picks up y_scale^2
    logdet_A_orig = logdet_A + 2.0 * design.logdet_xscale
    log_pwrss = math.log(pwrss) + 2.0 * design.log_yscale
    crit = logdet_M + logdet_A_orig + dof * (1.0 + math.log(2.0 * math.pi) + log_pwrss - math.log(dof))
    if not math.isfinite(crit):
        raise MixedModelError(f"non-finite REML criterion at theta={theta}")
    return _Solution(crit, beta, v, pwrss, L_M, A, lam)


def reml_criterion(theta, design: Design) -> float:
    """-2 x restricted log-likelihood with fixed effects and residual variance profiled out."""
    return _solve(design, theta).criterion


def reml_gradient(theta, design: Design) -> np.ndarray:
    """Analytic derivative of :func:`reml_criterion` with respect to ``theta``."""
    sol = _solve(design, theta)
    ZtZ, lam = design.ZtZ, sol.lam
    W = linalg.solve_triangular(sol.L_M, lam[:, None] * ZtZ, lower=True)
    cX = linalg.solve_triangular(sol.L_M, lam[:, None] * design.ZtX, lower=True)
    cy = linalg.solve_triangular(sol.L_M, lam * design.Zty, lower=True)
    ZHZ = ZtZ - W.T @ W
    ZHX = design.ZtX - W.T @ cX
    ZHy = design.Zty - W.T @ cy
    ZPZ = ZHZ - ZHX @ linalg.cho_solve(linalg.cho_factor(sol.A), ZHX.T)
    ZPy = ZHy - ZHX @ sol.beta_std
    dof = design.n - design.p
    grad = np.zeros(len(design.block_sizes))
    start = 0
    for k, size in enumerate(design.block_sizes):
        sl = slice(start, start + size)
        grad[k] = np.trace(ZPZ[sl, sl]) - dof * float(ZPy[sl] @ ZPy[sl]) / sol.pwrss
        start += size
    return grad


def build_design(dataset, spec: MixedModelSpec | None = None) -> Design:
    """Fixed design with intercept, indicator matrices per level, response."""
    spec = spec or MixedModelSpec()
    if dataset.n == 0:
        raise MixedModelError("empty dataset")
    cols = [np.ones(dataset.n)]
    for name in spec.fixed_effects:
        cols.append(np.asarray(dataset.column(name), dtype=float))
    X = np.column_stack(cols)
    codes = [_group_codes(dataset, g) for g in spec.grouping]
    if len(codes) == 2:
        outer, inner = codes
        parent: dict = {}
        for o, c in zip(outer, inner):
            if parent.setdefault(int(c), int(o)) != int(o):
                raise NestingError(
                    f"{spec.grouping[1]} {int(c)} appears under {spec.grouping[0]} "
                    f"{parent[int(c)]} and {int(o)}"
                )
    return Design(X, (INTERCEPT,) + spec.fixed_effects, dataset.y, codes, spec.grouping)


@dataclass
class MixedModelFit:
    spec: MixedModelSpec
    fixed_names: tuple
    beta: np.ndarray
    std_errors: np.ndarray
    variances: dict          # grouping name -> variance
    var_residual: float
    blups: dict              # grouping name -> {code: value}
    reml_loglik: float
    n_obs: int
    n_groups: dict
    theta: np.ndarray
    cov_joint: np.ndarray    # covariance of (beta, u) in original units
    levels: list             # level codes per grouping block, matching cov_joint order
    diagnostics: dict = field(default_factory=dict)

    @property
    def intercept(self) -> float:
        return float(self.beta[0])

    @property
    def coefficients(self) -> np.ndarray:
        return self.beta[1:]

    @property
    def t_values(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.beta / self.std_errors
        return np.where(self.std_errors > 0, t, 0.0)

    @property
    def p_values(self) -> np.ndarray:
        return 2.0 * stats.norm.sf(np.abs(self.t_values))

    def _by_position(self, pos: int, attr):
        names = self.spec.grouping
        if len(names) == 1:
            return 0.0 if attr == "var" else {}
        name = names[pos]
        return self.variances[name] if attr == "var" else self.blups[name]

    @property
    def var_league(self) -> float:
        return self._by_position(0, "var")

    @property
    def var_club_in_league(self) -> float:
        return self._by_position(-1, "var") if len(self.spec.grouping) == 2 else self.variances[self.spec.grouping[0]]

    @property
    def league_blups(self) -> dict:
        return self._by_position(0, "blup")

    @property
    def club_blups(self) -> dict:
        return self.blups[self.spec.grouping[-1]]

    @property
    def n_clubs(self) -> int:
        return self.n_groups.get(self.spec.grouping[-1], 0)

    @property
    def n_leagues(self) -> int:
        return self.n_groups.get(self.spec.grouping[0], 0) if len(self.spec.grouping) == 2 else 0

    @property
    def n_params(self) -> int:
        return len(self.beta) + len(self.variances) + 1

    def _design_rows(self, dataset):
        cols = [np.ones(dataset.n)] + [np.asarray(dataset.column(c), float) for c in self.spec.fixed_effects]
        X = np.column_stack(cols)
        Zs, unseen = [], []
        for name, levels in zip(self.spec.grouping, self.levels):
            codes = _group_codes(dataset, name)
            Zs.append((codes[:, None] == np.asarray(levels)[None, :]).astype(float))
            unseen.append(~np.isin(codes, levels))
        return X, np.hstack(Zs), unseen

    def predict(self, dataset, conditional: bool = True) -> np.ndarray:
        """Linear predictor; ``conditional`` adds the group BLUPs (0 for unseen groups)."""
        X, Z, _ = self._design_rows(dataset)
        out = X @ self.beta
        if conditional:
            out = out + Z @ self._u_vector()
        return out

    def fixed_predict(self, dataset) -> np.ndarray:
        return self.predict(dataset, conditional=False)

    def _u_vector(self) -> np.ndarray:
        parts = []
        for name, levels in zip(self.spec.grouping, self.levels):
            parts.append([self.blups[name][int(c)] for c in levels])
        return np.concatenate(parts) if parts else np.zeros(0)

    def to_dict(self) -> dict:
        return {
            "format": FIT_FORMAT, "version": FIT_VERSION,
            "spec": self.spec.to_dict(),
            "fixed_names": list(self.fixed_names),
            "coefficients": [float(v) for v in self.beta],
            "std_errors": [float(v) for v in self.std_errors],
            "variance_components": {k: float(v) for k, v in self.variances.items()},
            "var_residual": float(self.var_residual),
            "blups": {k: {str(c): float(v) for c, v in d.items()} for k, d in self.blups.items()},
            "reml_loglik": float(self.reml_loglik),
            "n_obs": int(self.n_obs),
            "n_groups": {k: int(v) for k, v in self.n_groups.items()},
            "theta": [float(v) for v in self.theta],
            "levels": [[int(c) for c in lv] for lv in self.levels],
            "cov_joint": [[float(v) for v in row] for row in self.cov_joint],
            "metadata": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MixedModelFit":
        if doc.get("format") != FIT_FORMAT or doc.get("version") != FIT_VERSION:
            raise MixedModelError(f"not a version-{FIT_VERSION} mixed-model document")
        spec = MixedModelSpec(**doc["spec"])
        return cls(
            spec=spec, fixed_names=tuple(doc["fixed_names"]),
            beta=np.array(doc["coefficients"]), std_errors=np.array(doc["std_errors"]),
            variances=dict(doc["variance_components"]), var_residual=doc["var_residual"],
            blups={k: {int(c): v for c, v in d.items()} for k, d in doc["blups"].items()},
            reml_loglik=doc["reml_loglik"], n_obs=doc["n_obs"], n_groups=dict(doc["n_groups"]),
            theta=np.array(doc["theta"]), cov_joint=np.array(doc["cov_joint"]),
            levels=[np.array(lv, dtype=np.int64) for lv in doc["levels"]],
            diagnostics=dict(doc.get("metadata", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# optimisation


@dataclass(frozen=True)
class OptSettings:
    max_iter: int = 500
    rel_tol: float = 1e-8
    polish: bool = True


def _optimise(design: Design, settings: OptSettings):
    k = len(design.block_sizes)
    lo, hi = math.log(THETA_FLOOR), math.log(THETA_CEIL)
    n_eval = [0]
    best = [math.inf, None]

    def f(phi):
        theta = np.exp(np.clip(phi, lo, hi))
        n_eval[0] += 1
        try:
            val = reml_criterion(theta, design)
        except MixedModelError:
            return math.inf
        if val < best[0]:
            best[0], best[1] = val, theta.copy()
        return val

    grid_1d = np.log(np.array([THETA_FLOOR, 1e-4, 1e-2, 0.1, 0.5, 2.0, 10.0, 100.0]))
    grid = np.stack(np.meshgrid(*([grid_1d] * k), indexing="ij"), -1).reshape(-1, k)
    values = [f(phi) for phi in grid]
    if not np.isfinite(np.min(values)):
        raise FitError("REML criterion is not finite on the start grid", n_iter=n_eval[0])
    start = grid[int(np.argmin(values))]

    f0 = best[0]
    res = optimize.minimize(
        f, start, method="Nelder-Mead", bounds=[(lo, hi)] * k,
        options={"maxiter": settings.max_iter, "xatol": 1e-7,
                 "fatol": settings.rel_tol * max(1.0, abs(f0)), "initial_simplex": None},
    )
    if not res.success and res.nit >= settings.max_iter:
        raise FitError(
            f"REML optimisation did not converge in {settings.max_iter} iterations",
            best_theta=best[1], best_criterion=best[0], n_iter=res.nit,
        )
    theta = np.exp(np.clip(res.x, lo, hi))

    if settings.polish:
        # bounded quasi-Newton on the variance ratios with the exact gradient;
        # handles boundary optima that the log-scale simplex approaches slowly
        def fg(t):
            n_eval[0] += 1
            return reml_criterion(t, design), reml_gradient(t, design)

        try:
            pol = optimize.minimize(
                fg, theta, jac=True, method="L-BFGS-B",
                bounds=[(THETA_FLOOR, THETA_CEIL)] * k,
                options={"maxiter": 200, "ftol": 1e-15, "gtol": 1e-10},
            )
            if np.isfinite(pol.fun) and pol.fun <= reml_criterion(theta, design):
                theta = np.clip(pol.x, THETA_FLOOR, THETA_CEIL)
        except MixedModelError:
            pass
        theta = _newton_refine(design, theta)
    crit = reml_criterion(theta, design)
    # the polished point may sit a rounding error above the best simplex value
    if best[1] is not None and best[0] < crit - 1e-9 * abs(crit):
        theta, crit = best[1], best[0]
    return theta, crit, {"n_eval": n_eval[0], "nelder_mead_iter": int(res.nit)}


def _newton_refine(design: Design, theta, max_steps: int = 20) -> np.ndarray:
    """Newton steps in log-ratio space on the interior components.

    Components at the floor are left alone.  A step is kept only if it
    shrinks the gradient norm, so this never makes the point worse.
    """
    theta = np.asarray(theta, dtype=float).copy()
    free = np.flatnonzero(theta > 1e3 * THETA_FLOOR)
    if free.size == 0:
        return theta

    def grad_phi(th):
        return (th * reml_gradient(th, design))[free]

    h = 1e-4
    try:
        g = grad_phi(theta)
        for _ in range(max_steps):
            if np.max(np.abs(g)) < 1e-10:
                break
            H = np.empty((free.size, free.size))
            for a, k in enumerate(free):
                up, dn = theta.copy(), theta.copy()
                up[k] *= math.exp(h)
                dn[k] *= math.exp(-h)
                H[:, a] = (grad_phi(up) - grad_phi(dn)) / (2 * h)
            H = (H + H.T) / 2
            step = np.linalg.solve(H, -g)
            cand = theta.copy()
            cand[free] = np.clip(theta[free] * np.exp(np.clip(step, -2, 2)), THETA_FLOOR, THETA_CEIL)
            g_new = grad_phi(cand)
            if not np.max(np.abs(g_new)) < np.max(np.abs(g)):
                break
            theta, g = cand, g_new
    except (MixedModelError, np.linalg.LinAlgError):
        pass
    return theta


def fit_reml(dataset, spec: MixedModelSpec | None = None,
             opt_settings: OptSettings | None = None, theta=None) -> MixedModelFit:
    """REML fit; pass ``theta`` to evaluate at fixed variance ratios instead."""
    spec = spec or MixedModelSpec()
    design = dataset if isinstance(dataset, Design) else build_design(dataset, spec)
    settings = opt_settings or OptSettings()
    if theta is None:
        theta, crit, diag = _optimise(design, settings)
        diag["optimised"] = True
    else:
        theta = np.asarray(theta, dtype=float)
        crit = reml_criterion(theta, design)
        diag = {"optimised": False}
    return _assemble(design, spec, theta, crit, diag)


def _assemble(design: Design, spec, theta, crit, diag) -> MixedModelFit:
    sol = _solve(design, theta)
    n, p, q = design.n, design.p, design.q
    sigma2_std = sol.pwrss / (n - p)
    sigma2 = sigma2_std * design.y_scale ** 2
    beta = design.coef_shift + design.coef_map @ sol.beta_std
    u = design.y_scale * sol.lam * sol.v

    # joint covariance of (beta, u) from the mixed-model equations (standardised)
    lam = sol.lam
    C = np.empty((p + q, p + q))
    C[:p, :p] = design.XtX
    C[:p, p:] = design.ZtX.T * lam[None, :]
    C[p:, :p] = C[:p, p:].T
    C[p:, p:] = lam[:, None] * design.ZtZ * lam[None, :] + np.eye(q)
    C_inv = linalg.cho_solve(linalg.cho_factor(C), np.eye(p + q)) * sigma2_std
    J = np.zeros((p + q, p + q))
    J[:p, :p] = design.coef_map
    J[p:, p:] = np.diag(design.y_scale * lam)
    cov = J @ C_inv @ J.T
    cov = (cov + cov.T) / 2.0
    se = np.sqrt(np.maximum(np.diag(cov)[:p], 0.0))

    variances, blups, n_groups = {}, {}, {}
    start = 0
    for k, (name, levels) in enumerate(zip(design.group_names, design.levels)):
        size = len(levels)
        variances[name] = float(theta[k] * sigma2)
        blups[name] = {int(c): float(v) for c, v in zip(levels, u[start:start + size])}
        n_groups[name] = size
        start += size
    diag = dict(diag)
    diag["reml_criterion"] = float(crit)
    return MixedModelFit(
        spec=spec, fixed_names=design.fixed_names, beta=beta, std_errors=se,
        variances=variances, var_residual=float(sigma2), blups=blups,
        reml_loglik=-0.5 * float(crit), n_obs=n, n_groups=n_groups,
        theta=np.asarray(theta, dtype=float), cov_joint=cov,
        levels=[np.asarray(lv) for lv in design.levels], diagnostics=diag,
    )


# --------------------------------------------------------------------------
# reporting


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def fixed_effect_table(fit: MixedModelFit) -> list[tuple]:
    """Rows of ``(name, estimate, t value, p value, stars)``.

    p-values use the two-sided standard normal approximation.
    """
    rows = []
    for name, est, t, p in zip(fit.fixed_names, fit.beta, fit.t_values, fit.p_values):
        rows.append((name, float(est), float(t), float(p), significance_stars(p)))
    return rows


def information_criteria(fit: MixedModelFit) -> tuple[float, float]:
    """AIC and BIC from the REML log-likelihood.

    The parameter count is the fixed effects (with intercept) plus one
    variance per grouping level plus the residual variance.
    """
    k = fit.n_params
    dev = -2.0 * fit.reml_loglik
    return dev + 2.0 * k, dev + k * math.log(fit.n_obs)


def r2_nakagawa(fit: MixedModelFit, dataset) -> tuple[float, float]:
    """Marginal and conditional R^2 (variance of the fixed-part predictions
    against the sum of fixed, group and residual variances)."""
    var_fixed = float(np.var(fit.fixed_predict(dataset), ddof=1))
    var_groups = float(sum(fit.variances.values()))
    total = var_fixed + var_groups + fit.var_residual
    return var_fixed / total, (var_fixed + var_groups) / total


@dataclass(frozen=True)
class PredictionInterval:
    player: str
    predicted: float
    upper: float
    lower: float
    level: float


def simulate_linear_predictor(fit: MixedModelFit, dataset, n_draws: int = 1000,
                              rng_state=None) -> tuple[np.ndarray, np.ndarray]:
    """Point predictions and ``(n, n_draws)`` simulated linear predictors.

    Fixed effects and group effects are drawn jointly from their normal
    approximation; groups not seen in fitting get fresh draws from their
    variance component.  Residual noise is not added.
    """
    if rng_state is None:
        raise ValueError("rng_state is required for reproducible intervals")
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    rng = np.random.default_rng(rng_state)
    X, Z, unseen = fit._design_rows(dataset)
    XZ = np.hstack([X, Z])
    mean = np.concatenate([fit.beta, fit._u_vector()])
    point = XZ @ mean
    w, V = linalg.eigh(fit.cov_joint)
    factor = V * np.sqrt(np.clip(w, 0.0, None))[None, :]
    noise = factor @ rng.standard_normal((len(mean), n_draws))
    sims = point[:, None] + XZ @ noise
    for name, mask in zip(fit.spec.grouping, unseen):
        if mask.any():
            codes = _group_codes(dataset, name)[mask]
            new_levels, inv = np.unique(codes, return_inverse=True)
            sd = math.sqrt(fit.variances[name])
            draws = rng.standard_normal((len(new_levels), n_draws)) * sd
            sims[mask] += draws[inv]
    return point, sims


def prediction_interval(fit: MixedModelFit, records, level: float = 0.90,
                        n_draws: int = 1000, rng_state=None) -> list[PredictionInterval]:
    """Simulated interval per record from the empirical draw quantiles.

    The interval is widened, if needed, to contain the point prediction.
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    point, sims = simulate_linear_predictor(fit, records, n_draws, rng_state)
    lower, upper = np.quantile(sims, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=1)
    lower = np.minimum(lower, point)
    upper = np.maximum(upper, point)
    return [
        PredictionInterval(records.players[i], float(point[i]), float(upper[i]),
                           float(lower[i]), float(level))
        for i in range(records.n)
    ]


def load_fit(path) -> MixedModelFit:
    return MixedModelFit.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def write_intervals(path, intervals: Sequence[PredictionInterval], salaries) -> None:
    """Interval table with columns ``Player,Salary,Pred,up,down``."""
    from ._io import write_csv

    write_csv(path, ["Player", "Salary", "Pred", "up", "down"],
              ((iv.player, float(s), iv.predicted, iv.upper, iv.lower)
               for iv, s in zip(intervals, salaries)))
