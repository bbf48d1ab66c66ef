"""Stochastic surrogate of the regressor: a K-component mixture of linear
experts over (continuous features, discrete features, predicted response).

Generative model per row, with component k ~ Categorical(pi):

    x_cont ~ Normal(m_k, diag(v_k))
    x_disc_j ~ Categorical(phi_jk)
    y ~ Normal(beta1_k + beta2_k . x_cont + beta3_k . onehot(x_disc), sigma)

sigma is never sampled: it is fixed to half the regressor's test RMSE. The
component label is marginalized analytically, so every density here is
invariant under component permutation. Fitting is adaptive random-walk
Metropolis-within-Gibbs on an optionally tempered posterior; model size is
chosen by WBIC (tempered chain at beta = 1/log n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import DataError

__all__ = [
    "SurrogateSpec",
    "ParamSet",
    "PosteriorSamples",
    "SurrogateModel",
    "McmcConfig",
    "log_joint_density",
    "log_joint_density_rows",
    "log_prior",
    "fit_mcmc",
    "wbic",
    "select_K",
    "node_log_density",
    "SurrogateError",
]

LOG_2PI = math.log(2.0 * math.pi)

# Prior scales (sd unless noted): intercept Normal(y_mean, 5*y_std); slopes
# Laplace(0, 1); component means Normal(0, sqrt(5)); each diagonal covariance
# entry half-Cauchy(0, 2.5); all simplexes Dirichlet(1).
M_PRIOR_SD = math.sqrt(5.0)
BETA1_SD_FACTOR = 5.0
HALF_CAUCHY_SCALE = 2.5


class SurrogateError(ValueError):
    pass


@dataclass(frozen=True)
class SurrogateSpec:
    """Shape and fixed scalars of one surrogate model."""

    k: int
    d_cont: int
    disc_cardinalities: tuple[int, ...]
    sigma: float  # fixed to RMSE_test / 2
    y_mean: float
    y_std: float

    def __post_init__(self):
        if self.k < 1:
            raise SurrogateError("component count must be >= 1")
        if self.sigma <= 0:
            raise SurrogateError("sigma must be positive")
        if self.y_std <= 0:
            raise SurrogateError("y_std must be positive")

    @property
    def n_onehot(self) -> int:
        return int(sum(self.disc_cardinalities))

    @property
    def slot_offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for c in self.disc_cardinalities:
            out.append(acc)
            acc += c
        return tuple(out)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "d_cont": self.d_cont,
            "disc_cardinalities": list(self.disc_cardinalities),
            "sigma": self.sigma,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d) -> "SurrogateSpec":
        return cls(
            k=int(d["k"]),
            d_cont=int(d["d_cont"]),
            disc_cardinalities=tuple(int(c) for c in d["disc_cardinalities"]),
            sigma=float(d["sigma"]),
            y_mean=float(d["y_mean"]),
            y_std=float(d["y_std"]),
        )


@dataclass
class ParamSet:
    """One posterior draw. ``var`` holds the diagonal covariance entries;
    ``phi`` and ``beta3`` are concatenated over discrete features using the
    spec's slot offsets."""

    pi: np.ndarray  # (K,)
    m: np.ndarray  # (K, d)
    var: np.ndarray  # (K, d)
    phi: np.ndarray  # (K, n_onehot)
    beta1: np.ndarray  # (K,)
    beta2: np.ndarray  # (K, d)
    beta3: np.ndarray  # (K, n_onehot)

    def validate(self, spec: SurrogateSpec) -> None:
        k, d = spec.k, spec.d_cont
        if self.pi.shape != (k,) or abs(self.pi.sum() - 1.0) > 1e-9 or (self.pi < 0).any():
            raise SurrogateError("pi is not a simplex of the right arity")
        if self.m.shape != (k, d) or self.var.shape != (k, d):
            raise SurrogateError("m / var shapes do not match (k, d_cont)")
        if (self.var <= 0).any():
            raise SurrogateError("covariance diagonal entries must be positive")
        if self.phi.shape != (k, spec.n_onehot) or self.beta3.shape != (k, spec.n_onehot):
            raise SurrogateError("phi / beta3 shapes do not match (k, n_onehot)")
        for off, c in zip(spec.slot_offsets, spec.disc_cardinalities):
            if np.abs(self.phi[:, off : off + c].sum(axis=1) - 1.0).max() > 1e-9:
                raise SurrogateError("a phi block is not a simplex")

    def permuted(self, perm) -> "ParamSet":
        perm = np.asarray(perm)
        return ParamSet(
            pi=self.pi[perm].copy(),
            m=self.m[perm].copy(),
            var=self.var[perm].copy(),
            phi=self.phi[perm].copy(),
            beta1=self.beta1[perm].copy(),
            beta2=self.beta2[perm].copy(),
            beta3=self.beta3[perm].copy(),
        )

    def copy(self) -> "ParamSet":
        return ParamSet(*(getattr(self, f).copy() for f in ("pi", "m", "var", "phi", "beta1", "beta2", "beta3")))

    def to_dict(self) -> dict:
        return {f: getattr(self, f).tolist() for f in ("pi", "m", "var", "phi", "beta1", "beta2", "beta3")}

    @classmethod
    def from_dict(cls, d) -> "ParamSet":
        return cls(**{f: np.asarray(d[f], dtype=np.float64) for f in ("pi", "m", "var", "phi", "beta1", "beta2", "beta3")})


def _logsumexp(a, axis=-1):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(under="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out

def _as_disc(x_disc, n_rows, n_features):
    x = np.asarray(x_disc, dtype=np.int64).reshape(n_rows, n_features)
    return x


def _component_loglik(p: ParamSet, spec: SurrogateSpec, x_cont, x_disc, y):
    """(n, K) per-component log densities, label term included."""
    x = np.atleast_2d(np.asarray(x_cont, dtype=np.float64))
    n = x.shape[0]
    if x.shape[1] != spec.d_cont:
        raise SurrogateError(f"x_cont has {x.shape[1]} dims, spec wants {spec.d_cont}")
    xd = _as_disc(x_disc, n, len(spec.disc_cardinalities))
    yv = np.asarray(y, dtype=np.float64).reshape(n)
    if not (np.isfinite(x).all() and np.isfinite(yv).all()):
        raise SurrogateError("non-finite inputs to the surrogate density")

    diff = x[:, None, :] - p.m[None, :, :]  # (n, K, d)
    quad = ((diff * diff) / p.var[None, :, :] + np.log(p.var)[None, :, :]).sum(axis=2)
    out = -0.5 * (spec.d_cont * LOG_2PI + quad)

    mu = p.beta1[None, :] + x @ p.beta2.T  # (n, K)
    if spec.disc_cardinalities:
        slots = xd + np.asarray(spec.slot_offsets, dtype=np.int64)[None, :]  # (n, J)
        out = out + np.log(p.phi[:, slots]).sum(axis=2).T  # (K, n, J) -> (n, K)
        mu = mu + p.beta3[:, slots].sum(axis=2).T
    r = (yv[:, None] - mu) / spec.sigma
    out = out - 0.5 * (LOG_2PI + 2.0 * math.log(spec.sigma) + r * r)
    with np.errstate(divide="ignore"):
        out = out + np.log(p.pi)[None, :]
    return out


def log_joint_density(p: ParamSet, spec: SurrogateSpec, x_cont, x_disc, y) -> float:
    """log sum_k pi_k N(x_cont|m_k,v_k) Cat(x_disc|phi_k) N(y|mu_k,sigma)."""
    return float(_logsumexp(_component_loglik(p, spec, x_cont, x_disc, y), axis=1)[0])


def log_joint_density_rows(p: ParamSet, spec: SurrogateSpec, x_cont, x_disc, y) -> np.ndarray:
    return _logsumexp(_component_loglik(p, spec, x_cont, x_disc, y), axis=1)


def _half_cauchy_logpdf(s):
    s = np.asarray(s, dtype=np.float64)
    out = np.where(
        s > 0,
        math.log(2.0 / (math.pi * HALF_CAUCHY_SCALE)) - np.log1p((s / HALF_CAUCHY_SCALE) ** 2),
        -np.inf,
    )
    return out


def log_prior(p: ParamSet, spec: SurrogateSpec) -> float:
    """Log prior density of a draw, normalizing constants included."""
    if (p.var <= 0).any():
        return -math.inf
    out = math.lgamma(spec.k)  # Dirichlet(1) on pi
    out += spec.k * sum(math.lgamma(c) for c in spec.disc_cardinalities)  # Dirichlet(1) on each phi block
    sd1 = BETA1_SD_FACTOR * spec.y_std
    out += float(np.sum(-0.5 * (LOG_2PI + 2.0 * math.log(sd1) + ((p.beta1 - spec.y_mean) / sd1) ** 2)))
    out += float(np.sum(-np.abs(p.beta2) - math.log(2.0)))
    out += float(np.sum(-np.abs(p.beta3) - math.log(2.0)))
    out += float(np.sum(-0.5 * (LOG_2PI + 2.0 * math.log(M_PRIOR_SD) + (p.m / M_PRIOR_SD) ** 2)))
    out += float(np.sum(_half_cauchy_logpdf(p.var)))
    return out


@dataclass
class McmcConfig:
    iterations: int = 1500
    warmup: int = 500
    seed: int = 0
    density_mode: str = "sample-average"  # or "map-sample"
    density_draws: int = 64

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "warmup": self.warmup,
            "seed": self.seed,
            "density_mode": self.density_mode,
            "density_draws": self.density_draws,
        }

    @classmethod
    def from_dict(cls, d) -> "McmcConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class PosteriorSamples:
    spec: SurrogateSpec
    draws: list[ParamSet]
    temper_beta: float
    iterations: int
    warmup: int
    seed: int
    acceptance: dict[str, float]
    loglik: np.ndarray  # untempered total log-likelihood per draw
    logpost: np.ndarray  # log_prior + loglik per draw (untempered)


def _alr(simplex):
    return np.log(simplex[:-1]) - math.log(simplex[-1])


def _alr_inv(w):
    z = np.concatenate([w, [0.0]])
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


class _Chain:
    """Adaptive Metropolis-within-Gibbs over parameter blocks.

    Per-row, per-component likelihood terms are cached in three matrices
    (x-part, discrete part, y-part) so a block update recomputes only the
    column it touches.
    """

    TARGET_ACCEPT = 0.3
    # Proposal scales start broad (1.0), then adapt toward the target
    # acceptance under these ceilings. Variance blocks get a tighter ceiling
    # so spread parameters move conservatively; everything else shares one
    # stability bound.
    INITIAL_SCALE = 1.0
    MAX_SCALE_VAR = 0.1
    MAX_SCALE = 0.3

    def __init__(self, spec, x_cont, x_disc, y, temper_beta, rng, init=None, only_blocks=None):
        self.spec = spec
        self.x = np.asarray(x_cont, dtype=np.float64)
        self.n = self.x.shape[0]
        self.xd = _as_disc(x_disc, self.n, len(spec.disc_cardinalities))
        self.y = np.asarray(y, dtype=np.float64).reshape(self.n)
        self.beta = temper_beta
        self.rng = rng
        self.only_blocks = only_blocks
        if spec.disc_cardinalities:
            self.slots = self.xd + np.asarray(spec.slot_offsets, dtype=np.int64)[None, :]
        else:
            self.slots = None
        ok = False
        for attempt in range(100):
            self.state = init.copy() if init is not None else self._draw_init()
            self._refresh_caches()
            if np.isfinite(self.loglik) and np.isfinite(log_prior(self.state, spec)):
                ok = True
                break
            if init is not None:
                break  # a caller-pinned state is not redrawn
        if not ok:
            raise SurrogateError("posterior not finite at initialization after 100 re-draws")
        self.scales = {}
        self.accept_count = {}
        self.try_count = {}
        self.adapt_step = {}

    def _draw_init(self):
        """Start from the data: component positions at k-means++-style seeded
        rows, variances at the per-dimension data variance, uniform weights
        and label probabilities, and experts flat at the prediction mean.
        Guarantees a finite posterior at iteration zero."""
        spec = self.spec
        k, d = spec.k, spec.d_cont
        phi = np.zeros((k, spec.n_onehot))
        for off, c in zip(spec.slot_offsets, spec.disc_cardinalities):
            phi[:, off : off + c] = 1.0 / c
        if d and self.n:
            pts = [self.x[self.rng.integers(self.n)]]
            while len(pts) < k:
                d2 = np.min([((self.x - p) ** 2).sum(axis=1) for p in pts], axis=0)
                tot = d2.sum()
                if tot > 0:
                    pts.append(self.x[self.rng.choice(self.n, p=d2 / tot)])
                else:
                    pts.append(self.x[self.rng.integers(self.n)])
            m = np.array(pts)
            var = np.tile(self.x.var(axis=0).clip(1e-6), (k, 1))
        else:
            m = np.zeros((k, d))
            var = np.ones((k, d))
        return ParamSet(
            pi=np.full(k, 1.0 / k),
            m=m,
            var=var,
            phi=phi,
            beta1=np.full(k, spec.y_mean),
            beta2=np.zeros((k, d)),
            beta3=np.zeros((k, spec.n_onehot)),
        )

    # -- cached likelihood pieces ------------------------------------------

    def _x_col(self, k, m_k=None, var_k=None):
        m_k = self.state.m[k] if m_k is None else m_k
        var_k = self.state.var[k] if var_k is None else var_k
        diff = self.x - m_k
        return -0.5 * (self.spec.d_cont * LOG_2PI + (np.log(var_k) + diff * diff / var_k).sum(axis=1))

    def _disc_col(self, k, phi_k=None):
        if self.slots is None:
            return np.zeros(self.n)
        phi_k = self.state.phi[k] if phi_k is None else phi_k
        return np.log(phi_k[self.slots]).sum(axis=1)

    def _y_col(self, k, b1=None, b2=None, b3=None):
        b1 = self.state.beta1[k] if b1 is None else b1
        b2 = self.state.beta2[k] if b2 is None else b2
        b3 = self.state.beta3[k] if b3 is None else b3
        mu = b1 + self.x @ b2
        if self.slots is not None:
            mu = mu + b3[self.slots].sum(axis=1)
        r = (self.y - mu) / self.spec.sigma
        return -0.5 * (LOG_2PI + 2.0 * math.log(self.spec.sigma) + r * r)

    def _refresh_caches(self):
        k = self.spec.k
        self.A = np.column_stack([self._x_col(j) for j in range(k)])
        self.B = np.column_stack([self._disc_col(j) for j in range(k)])
        self.D = np.column_stack([self._y_col(j) for j in range(k)])
        self.loglik = self._total(np.log(self.state.pi), self.A + self.B + self.D)

    def _total(self, logpi, C):
        return float(_logsumexp(logpi[None, :] + C, axis=1).sum())

    def _total_with_col(self, k, new_col):
        C = self.A + self.B + self.D
        C[:, k] = new_col
        return self._total(np.log(self.state.pi), C)

    # -- Metropolis step machinery -----------------------------------------

    def _step_scale(self, name, default):
        if name not in self.scales:
            self.scales[name] = default
            self.accept_count[name] = 0
            self.try_count[name] = 0
            self.adapt_step[name] = 0
        return self.scales[name]

    def _record(self, name, log_alpha, accepted, warming):
        self.try_count[name] += 1
        if accepted:
            self.accept_count[name] += 1
        if warming:
            self.adapt_step[name] += 1
            rate = min(1.0, math.exp(min(0.0, log_alpha)))
            gamma = self.adapt_step[name] ** -0.6
            cap = self.MAX_SCALE_VAR if name.startswith("var") else self.MAX_SCALE
            self.scales[name] = float(
                np.clip(self.scales[name] * math.exp(gamma * (rate - self.TARGET_ACCEPT)), 1e-6, cap)
            )

    def _mh(self, name, default_scale, log_ratio_fn, warming):
        """log_ratio_fn(scale) -> (log_alpha, apply_fn or None)."""
        scale = self._step_scale(name, default_scale)
        log_alpha, apply_fn = log_ratio_fn(scale)
        accept = math.log(self.rng.random()) < log_alpha if np.isfinite(log_alpha) else False
        if accept and apply_fn is not None:
            apply_fn()
        self._record(name, log_alpha, accept, warming)

    def _want(self, block):
        return self.only_blocks is None or block in self.only_blocks

    def sweep(self, warming):
        spec = self.spec
        s0 = self.INITIAL_SCALE
        if spec.k > 1 and self._want("pi"):
            self._mh("pi", s0, self._propose_pi, warming)
        for k in range(spec.k):
            if spec.d_cont and self._want("m"):
                self._mh(f"m{k}", s0, lambda s, k=k: self._propose_m(k, s), warming)
            if spec.d_cont and self._want("var"):
                self._mh(f"var{k}", s0, lambda s, k=k: self._propose_var(k, s), warming)
            if self._want("beta"):
                self._mh(f"beta{k}", s0, lambda s, k=k: self._propose_beta(k, s), warming)
            if self._want("phi"):
                for j, c in enumerate(spec.disc_cardinalities):
                    if c < 2:
                        continue
                    self._mh(f"phi{j}_{k}", s0, lambda s, j=j, k=k: self._propose_phi(j, k, s), warming)

    def _propose_pi(self, scale):
        st = self.state
        w = _alr(st.pi) + scale * self.rng.standard_normal(self.spec.k - 1)
        pi_new = _alr_inv(w)
        if (pi_new <= 0).any():
            return -math.inf, None
        new_ll = self._total(np.log(pi_new), self.A + self.B + self.D)
        log_alpha = self.beta * (new_ll - self.loglik) + float(np.log(pi_new).sum() - np.log(st.pi).sum())

        def apply():
            st.pi = pi_new
            self.loglik = new_ll

        return log_alpha, apply

    def _propose_m(self, k, scale):
        st = self.state
        m_new = st.m[k] + scale * self.rng.standard_normal(self.spec.d_cont)
        col = self._x_col(k, m_k=m_new)
        new_ll = self._total_with_col(k, col + self.B[:, k] + self.D[:, k])
        d_prior = -0.5 * float(np.sum(m_new**2) - np.sum(st.m[k] ** 2)) / (M_PRIOR_SD**2)
        log_alpha = self.beta * (new_ll - self.loglik) + d_prior

        def apply():
            st.m[k] = m_new
            self.A[:, k] = col
            self.loglik = new_ll

        return log_alpha, apply

    def _propose_var(self, k, scale):
        st = self.state
        u_new = np.log(st.var[k]) + scale * self.rng.standard_normal(self.spec.d_cont)
        var_new = np.exp(u_new)
        if not np.isfinite(var_new).all() or (var_new <= 0).any():
            return -math.inf, None
        col = self._x_col(k, var_k=var_new)
        new_ll = self._total_with_col(k, col + self.B[:, k] + self.D[:, k])
        d_prior = float(np.sum(_half_cauchy_logpdf(var_new)) - np.sum(_half_cauchy_logpdf(st.var[k])))
        d_jac = float(np.sum(u_new) - np.sum(np.log(st.var[k])))
        log_alpha = self.beta * (new_ll - self.loglik) + d_prior + d_jac

        def apply():
            st.var[k] = var_new
            self.A[:, k] = col
            self.loglik = new_ll

        return log_alpha, apply

    def _propose_beta(self, k, scale):
        st, spec = self.state, self.spec
        dim = 1 + spec.d_cont + spec.n_onehot
        step = scale * self.rng.standard_normal(dim)
        b1 = st.beta1[k] + step[0]
        b2 = st.beta2[k] + step[1 : 1 + spec.d_cont]
        b3 = st.beta3[k] + step[1 + spec.d_cont :]
        col = self._y_col(k, b1=b1, b2=b2, b3=b3)
        new_ll = self._total_with_col(k, self.A[:, k] + self.B[:, k] + col)
        sd1 = BETA1_SD_FACTOR * spec.y_std
        d_prior = -0.5 * ((b1 - spec.y_mean) ** 2 - (st.beta1[k] - spec.y_mean) ** 2) / sd1**2
        d_prior += float(np.sum(np.abs(st.beta2[k])) - np.sum(np.abs(b2)))
        d_prior += float(np.sum(np.abs(st.beta3[k])) - np.sum(np.abs(b3)))
        log_alpha = self.beta * (new_ll - self.loglik) + d_prior

        def apply():
            st.beta1[k] = b1
            st.beta2[k] = b2
            st.beta3[k] = b3
            self.D[:, k] = col
            self.loglik = new_ll

        return log_alpha, apply

    def _propose_phi(self, j, k, scale):
        st, spec = self.state, self.spec
        off = spec.slot_offsets[j]
        c = spec.disc_cardinalities[j]
        block = st.phi[k, off : off + c]
        w = _alr(block) + scale * self.rng.standard_normal(c - 1)
        block_new = _alr_inv(w)
        if (block_new <= 0).any():
            return -math.inf, None
        phi_k = st.phi[k].copy()
        phi_k[off : off + c] = block_new
        col = self._disc_col(k, phi_k=phi_k)
        new_ll = self._total_with_col(k, self.A[:, k] + col + self.D[:, k])
        d_jac = float(np.log(block_new).sum() - np.log(block).sum())
        log_alpha = self.beta * (new_ll - self.loglik) + d_jac

        def apply():
            st.phi[k] = phi_k
            self.B[:, k] = col
            self.loglik = new_ll

        return log_alpha, apply


def fit_mcmc(
    x_cont,
    x_disc,
    y,
    spec: SurrogateSpec,
    temper_beta: float = 1.0,
    iterations: int = 1500,
    warmup: int = 500,
    seed: int = 0,
    _init_state: ParamSet | None = None,
    _only_blocks=None,
) -> PosteriorSamples:
    """Sample the (tempered) posterior; returns post-warmup draws.

    The target is log_prior + temper_beta * log_likelihood. Proposal scales
    adapt toward 30% acceptance during warmup only, so the post-warmup chain
    is a fixed-kernel Markov chain. Deterministic per seed.
    """
    if not 0.0 < temper_beta <= 1.0:
        raise SurrogateError(f"temper_beta must be in (0, 1], got {temper_beta}")
    if warmup >= iterations:
        raise SurrogateError("warmup must be smaller than iterations")
    x_cont = np.atleast_2d(np.asarray(x_cont, dtype=np.float64))
    n = x_cont.shape[0]
    if n < 10 * spec.k:
        raise SurrogateError(f"need at least {10 * spec.k} rows to fit K={spec.k}, got {n}")
    rng = np.random.default_rng(seed)
    chain = _Chain(spec, x_cont, x_disc, y, temper_beta, rng, init=_init_state, only_blocks=_only_blocks)

    draws, logliks, logposts = [], [], []
    for it in range(iterations):
        chain.sweep(warming=it < warmup)
        if it >= warmup:
            d = chain.state.copy()
            draws.append(d)
            logliks.append(chain.loglik)
            logposts.append(chain.loglik + log_prior(d, spec))
    acceptance = {
        name: chain.accept_count[name] / max(1, chain.try_count[name]) for name in sorted(chain.try_count)
    }
    return PosteriorSamples(
        spec=spec,
        draws=draws,
        temper_beta=temper_beta,
        iterations=iterations,
        warmup=warmup,
        seed=seed,
        acceptance=acceptance,
        loglik=np.asarray(logliks),
        logpost=np.asarray(logposts),
    )


def _stacked(draws, spec):
    """Stack a draw list into arrays keyed for vectorized density evaluation."""
    return {
        "logpi": np.log(np.stack([d.pi for d in draws])),  # (S, K)
        "m": np.stack([d.m for d in draws]),  # (S, K, d)
        "var": np.stack([d.var for d in draws]),
        "logphi": np.log(np.stack([d.phi for d in draws])) if spec.n_onehot else None,
        "beta1": np.stack([d.beta1 for d in draws]),
        "beta2": np.stack([d.beta2 for d in draws]),
        "beta3": np.stack([d.beta3 for d in draws]) if spec.n_onehot else None,
    }


def _stacked_log_joint(st, spec, x_cont, x_disc, y):
    """(S, n) log joint densities for stacked draws; vectorized over both."""
    x = np.atleast_2d(np.asarray(x_cont, dtype=np.float64))
    n = x.shape[0]
    xd = _as_disc(x_disc, n, len(spec.disc_cardinalities))
    yv = np.asarray(y, dtype=np.float64).reshape(n)

    diff = x[None, :, None, :] - st["m"][:, None, :, :]  # (S, n, K, d)
    quad = ((diff * diff) / st["var"][:, None, :, :] + np.log(st["var"])[:, None, :, :]).sum(axis=3)
    comp = -0.5 * (spec.d_cont * LOG_2PI + quad)  # (S, n, K)
    mu = st["beta1"][:, None, :] + np.einsum("nd,skd->snk", x, st["beta2"])
    if spec.disc_cardinalities:
        slots = xd + np.asarray(spec.slot_offsets, dtype=np.int64)[None, :]  # (n, J)
        comp = comp + st["logphi"][:, :, slots].sum(axis=3).transpose(0, 2, 1)
        mu = mu + st["beta3"][:, :, slots].sum(axis=3).transpose(0, 2, 1)
    r = (yv[None, :, None] - mu) / spec.sigma
    comp = comp - 0.5 * (LOG_2PI + 2.0 * math.log(spec.sigma) + r * r)
    comp = comp + st["logpi"][:, None, :]
    return _logsumexp(comp, axis=2)  # (S, n)


def wbic(samples: PosteriorSamples, x_cont, x_disc, y) -> float:
    """Mean over draws of the total negative log-likelihood.

    Draws must come from the tempered posterior at beta = 1/log(n); anything
    else is rejected, since the estimator is only defined there.
    """
    x = np.atleast_2d(np.asarray(x_cont, dtype=np.float64))
    n = x.shape[0]
    if n < 3:
        raise SurrogateError("WBIC needs at least 3 rows")
    expected = 1.0 / math.log(n)
    if not math.isclose(samples.temper_beta, expected, rel_tol=1e-9):
        raise SurrogateError(
            f"samples drawn at temper_beta={samples.temper_beta}, WBIC for n={n} requires {expected}"
        )
    total = 0.0
    chunk = 128
    for lo in range(0, len(samples.draws), chunk):
        ll = _stacked_log_joint(_stacked(samples.draws[lo : lo + chunk], samples.spec), samples.spec, x, x_disc, y)
        total += float(-ll.sum(axis=1).sum())
    return total / len(samples.draws)


@dataclass
class SurrogateModel:
    """Planning-time surrogate: untempered posterior draws plus the WBIC table
    from model selection. Node densities average over a thinned draw subset
    (sample-average mode) or use the single highest-posterior draw."""

    spec: SurrogateSpec
    draws: list[ParamSet]
    wbic: float
    wbic_table: dict[int, float]
    density_mode: str = "sample-average"
    density_draws: int = 64
    seed: int = 0
    logpost: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]
    acceptance: dict = field(default_factory=dict, repr=False)
    _eval_stack: dict = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.density_mode not in ("sample-average", "map-sample"):
            raise SurrogateError(f"unknown density_mode {self.density_mode!r}")
        if not self.draws:
            raise SurrogateError("surrogate model needs at least one draw")
        if self.logpost is None:
            self.logpost = np.array([log_prior(d, self.spec) for d in self.draws])
        else:
            self.logpost = np.asarray(self.logpost, dtype=np.float64)

    def _density_draw_set(self) -> list[ParamSet]:
        if self.density_mode == "map-sample":
            return [self.draws[int(np.argmax(self.logpost))]]
        s = min(self.density_draws, len(self.draws))
        idx = np.unique(np.round(np.linspace(0, len(self.draws) - 1, s)).astype(int))
        return [self.draws[i] for i in idx]

    def _stack(self):
        if self._eval_stack is None:
            subset = self._density_draw_set()
            self._eval_stack = _stacked(subset, self.spec)
            self._eval_stack["count"] = len(subset)
        return self._eval_stack

    def node_log_density_batch(self, x_cont, x_disc, y) -> np.ndarray:
        st = self._stack()
        per_draw = _stacked_log_joint(st, self.spec, x_cont, x_disc, y)  # (S, n)
        if self.density_mode == "map-sample":
            return per_draw[0]
        return _logsumexp(per_draw, axis=0) - math.log(st["count"])

    def node_log_density(self, x_cont, x_disc, y) -> float:
        return float(self.node_log_density_batch(np.atleast_2d(x_cont), x_disc, y)[0])

    def to_dict(self) -> dict:
        return {
            "kind": "surrogate",
            "spec": self.spec.to_dict(),
            "draws": [d.to_dict() for d in self.draws],
            "wbic": self.wbic,
            "wbic_table": {str(k): v for k, v in sorted(self.wbic_table.items())},
            "density_mode": self.density_mode,
            "density_draws": self.density_draws,
            "seed": self.seed,
            "logpost": self.logpost.tolist(),
            "acceptance": self.acceptance,
        }

    @classmethod
    def from_dict(cls, d) -> "SurrogateModel":
        return cls(
            spec=SurrogateSpec.from_dict(d["spec"]),
            draws=[ParamSet.from_dict(x) for x in d["draws"]],
            wbic=float(d["wbic"]),
            wbic_table={int(k): float(v) for k, v in d["wbic_table"].items()},
            density_mode=d["density_mode"],
            density_draws=int(d["density_draws"]),
            seed=int(d.get("seed", 0)),
            logpost=np.asarray(d["logpost"], dtype=np.float64),
            acceptance=d.get("acceptance", {}),
        )


def node_log_density(model: SurrogateModel, x_cont, x_disc, y) -> float:
    return model.node_log_density(x_cont, x_disc, y)


def select_K(
    x_cont,
    x_disc,
    y,
    k_range,
    sigma: float,
    config: McmcConfig | None = None,
) -> SurrogateModel:
    """WBIC sweep over component counts, then an untempered planning fit.

    For each K a tempered chain at beta = 1/log(n) scores the model; the
    argmin K (ties to the smaller K) gets a fresh beta = 1 chain whose draws
    back the returned model. Seeds for the per-K chains and the final chain
    are derived deterministically from config.seed.
    """
    k_range = sorted(set(int(k) for k in k_range))
    if not k_range:
        raise SurrogateError("k_range must be non-empty")
    config = config or McmcConfig()
    x_cont = np.atleast_2d(np.asarray(x_cont, dtype=np.float64))
    n = x_cont.shape[0]
    yv = np.asarray(y, dtype=np.float64)
    y_mean = float(yv.mean())
    y_std = float(yv.std())
    xd = np.asarray(x_disc, dtype=np.int64)
    xd = xd.reshape(n, 0) if xd.size == 0 else xd.reshape(n, -1)
    cards = tuple(int(np.max(c)) + 1 for c in xd.T)
    beta_star = 1.0 / math.log(n)

    table = {}
    for k in k_range:
        spec = SurrogateSpec(k=k, d_cont=x_cont.shape[1], disc_cardinalities=cards, sigma=sigma, y_mean=y_mean, y_std=y_std)
        seed_k = int(np.random.SeedSequence([config.seed, 1, k]).generate_state(1)[0])
        samples = fit_mcmc(
            x_cont, xd, yv, spec,
            temper_beta=beta_star, iterations=config.iterations, warmup=config.warmup, seed=seed_k,
        )
        table[k] = wbic(samples, x_cont, xd, yv)
    best_k = min(table, key=lambda k: (table[k], k))

    spec = SurrogateSpec(
        k=best_k, d_cont=x_cont.shape[1], disc_cardinalities=cards, sigma=sigma, y_mean=y_mean, y_std=y_std
    )
    final_seed = int(np.random.SeedSequence([config.seed, 2, best_k]).generate_state(1)[0])
    final = fit_mcmc(
        x_cont, xd, yv, spec,
        temper_beta=1.0, iterations=config.iterations, warmup=config.warmup, seed=final_seed,
    )
    return SurrogateModel(
        spec=spec,
        draws=final.draws,
        wbic=table[best_k],
        wbic_table=table,
        density_mode=config.density_mode,
        density_draws=config.density_draws,
        seed=config.seed,
        logpost=final.logpost,
        acceptance=final.acceptance,
    )
