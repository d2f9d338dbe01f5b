"""Core utility mathematics for the edge resource contract model.

All functions here are pure and vectorize over numpy arrays, so they can be
applied per contract item or to whole M x N menus at once.  Internal math is
linear-scale; dB/dBm inputs must be converted at construction time with
:func:`dbm_to_watts` / :func:`db_to_linear`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TypeGrid",
    "ContractItem",
    "ContractMenu",
    "ChannelParams",
    "HMDParams",
    "SensitivityParams",
    "PTParams",
    "rsu_utility",
    "downlink_rate",
    "rendering_gain",
    "immersion",
    "latency",
    "av_type_utility",
    "utility_matrix",
    "eut_expected",
    "prob_weight",
    "pt_value",
    "pt_expected",
    "dbm_to_watts",
    "db_to_linear",
]

_PROB_TOL = 1e-12


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class TypeGrid:
    """The M x N lattice of seller types.

    ``theta`` divides the squared-bandwidth cost, ``sigma`` divides the
    squared-CPU-frequency cost, and ``q`` is the joint probability mass over
    type pairs.  Both type vectors must be strictly increasing so that the
    inverse-gap vectors used by the utility recurrence stay positive.
    """

    theta: np.ndarray
    sigma: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        theta = _as_array(self.theta)
        sigma = _as_array(self.sigma)
        q = _as_array(self.q)
        if theta.ndim != 1 or sigma.ndim != 1:
            raise ValueError("theta and sigma must be 1-D")
        if np.any(theta <= 0) or np.any(sigma <= 0):
            raise ValueError("type parameters must be positive")
        if np.any(np.diff(theta) <= 0):
            raise ValueError("theta must be strictly increasing")
        if np.any(np.diff(sigma) <= 0):
            raise ValueError("sigma must be strictly increasing")
        if q.shape != (theta.size, sigma.size):
            raise ValueError("q must have shape (M, N)")
        if np.any(q < 0):
            raise ValueError("probabilities must be nonnegative")
        if abs(q.sum() - 1.0) > _PROB_TOL:
            raise ValueError("probabilities must sum to 1")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "q", q)

    @property
    def m(self) -> int:
        return self.theta.size

    @property
    def n(self) -> int:
        return self.sigma.size


@dataclass(frozen=True)
class ContractItem:
    """One menu entry: bandwidth ``b``, CPU frequency ``f``, reward ``r``."""

    b: float
    f: float
    r: float

    def __post_init__(self):
        if self.b < 0 or self.f < 0 or self.r < 0:
            raise ValueError("contract item fields must be nonnegative")


@dataclass(frozen=True)
class ContractMenu:
    """M x N grid of contract items, stored as three aligned arrays."""

    b: np.ndarray
    f: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        b = _as_array(self.b)
        f = _as_array(self.f)
        r = _as_array(self.r)
        if b.ndim != 2 or b.shape != f.shape or b.shape != r.shape:
            raise ValueError("b, f, r must be equal-shape 2-D arrays")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "r", r)

    @property
    def shape(self) -> tuple[int, int]:
        return self.b.shape

    def item(self, m: int, n: int) -> ContractItem:
        return ContractItem(float(self.b[m, n]), float(self.f[m, n]), float(self.r[m, n]))

    def check_dims(self, grid: TypeGrid) -> None:
        if self.shape != (grid.m, grid.n):
            raise ValueError(
                f"menu shape {self.shape} does not match type grid ({grid.m}, {grid.n})"
            )


@dataclass(frozen=True)
class ChannelParams:
    """Downlink channel constants.

    ``p`` (transmit power, W) and ``g2`` (squared channel gain, linear) and
    ``d`` (distance, m) may be scalars or per-type-pair arrays; ``n0`` is the
    noise spectral density per unit of the bandwidth unit in use, and ``c`` is
    the latency of unit bandwidth carried over unit distance.
    """

    p: np.ndarray
    g2: np.ndarray
    n0: float
    c: float
    d: np.ndarray

    def __post_init__(self):
        p = _as_array(self.p)
        g2 = _as_array(self.g2)
        d = _as_array(self.d)
        if np.any(p <= 0) or np.any(g2 <= 0) or self.n0 <= 0:
            raise ValueError("p, g2 and n0 must be positive")
        if self.c < 0 or np.any(d < 0):
            raise ValueError("c and d must be nonnegative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "g2", g2)
        object.__setattr__(self, "d", d)


@dataclass(frozen=True)
class HMDParams:
    """Head-mounted-display rendering constants.

    ``mu`` is the effective capacitance coefficient (scalar or per type pair).
    """

    resolution: float
    framerate: float
    s_eff: np.ndarray
    t_th: float
    zeta1: float = 0.5
    zeta2: float = 0.5
    mu: np.ndarray = field(default_factory=lambda: np.array(1.0))

    def __post_init__(self):
        if self.zeta1 <= 0 or self.zeta2 <= 0:
            raise ValueError("zeta weights must be positive")
        if abs(self.zeta1 + self.zeta2 - 1.0) > 1e-12:
            raise ValueError("zeta1 + zeta2 must equal 1")
        if self.t_th <= 0:
            raise ValueError("t_th must be positive")
        mu = _as_array(self.mu)
        s_eff = _as_array(self.s_eff)
        if np.any(mu <= 0):
            raise ValueError("mu must be positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "s_eff", s_eff)


@dataclass(frozen=True)
class SensitivityParams:
    """User sensitivities to immersion (``alpha_imm``) and latency (``beta_lat``)."""

    alpha_imm: float
    beta_lat: float

    def __post_init__(self):
        if self.alpha_imm < 0 or self.beta_lat < 0:
            raise ValueError("sensitivities must be nonnegative")


@dataclass(frozen=True)
class PTParams:
    """Prospect-theory transform parameters.

    ``weight_coeff`` is the exponent of the inverse-S probability weighting
    curve (named distinctly from the immersion sensitivity).  When
    ``use_weighting`` is off the raw probabilities weight the per-type values.
    """

    delta_plus: float = 1.0
    delta_minus: float = 1.0
    kappa: float = 0.0
    u_ref: float = 0.0
    weight_coeff: float = 1.0
    use_weighting: bool = False

    def __post_init__(self):
        if not (0.0 < self.delta_plus <= 1.0 and 0.0 < self.delta_minus <= 1.0):
            raise ValueError("gain/loss exponents must lie in (0, 1]")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.weight_coeff <= 0:
            raise ValueError("weight_coeff must be positive")


def rsu_utility(item: ContractItem, theta_m: float, sigma_n: float) -> float:
    """Seller utility R - b^2/theta - f^2/sigma for its own item."""
    if theta_m <= 0 or sigma_n <= 0:
        raise ValueError("type parameters must be positive")
    return item.r - item.b**2 / theta_m - item.f**2 / sigma_n


def downlink_rate(b, ch: ChannelParams):
    """Downlink rate b*ln(1 + p*g2/(b*n0)), with the b -> 0 limit taken as 0."""
    b = _as_array(b)
    snr_num = ch.p * ch.g2 / ch.n0
    safe_b = np.where(b > 0, b, 1.0)
    rate = np.where(b > 0, b * np.log1p(snr_num / safe_b), 0.0)
    if rate.ndim == 0:
        return float(rate)
    return rate


def rendering_gain(b, f, hmd: HMDParams):
    """Log rendering gain ln(Dv(z1*S*b + z2*mu*f^2)/T_th)."""
    b = _as_array(b)
    f = _as_array(f)
    arg = (
        hmd.resolution
        * hmd.framerate
        * (hmd.zeta1 * hmd.s_eff * b + hmd.zeta2 * hmd.mu * f**2)
    )
    if np.any(arg <= 0):
        raise ValueError("rendering argument must be positive (b and f cannot both be 0)")
    gain = np.log(arg / hmd.t_th)
    if gain.ndim == 0:
        return float(gain)
    return gain


def immersion(b, f, ch: ChannelParams, hmd: HMDParams):
    """Immersion metric: downlink rate times log rendering gain.

    Zero bandwidth gives zero immersion regardless of f (the rate factor
    vanishes), so the rendering-gain domain error is only raised when it is
    actually needed, i.e. for b > 0.
    """
    b = _as_array(b)
    f = _as_array(f)
    rate = _as_array(downlink_rate(b, ch))
    arg = (
        hmd.resolution
        * hmd.framerate
        * (hmd.zeta1 * hmd.s_eff * b + hmd.zeta2 * hmd.mu * f**2)
    )
    arg = _as_array(arg)
    pos_b = np.broadcast_to(b > 0, arg.shape)
    if np.any(pos_b & (arg <= 0)):
        raise ValueError("rendering argument must be positive (b and f cannot both be 0)")
    gain = np.where(pos_b, np.log(np.where(arg > 0, arg, 1.0) / hmd.t_th), 0.0)
    out = rate * gain
    if out.ndim == 0:
        return float(out)
    return out


def latency(b, ch: ChannelParams):
    """Transmission latency c*d*b."""
    out = ch.c * ch.d * _as_array(b)
    if out.ndim == 0:
        return float(out)
    return out


def av_type_utility(
    item: ContractItem,
    ch: ChannelParams,
    hmd: HMDParams,
    sens: SensitivityParams,
) -> float:
    """Buyer utility from one type pair: alpha*immersion - beta*latency - R."""
    return float(
        sens.alpha_imm * _as_array(immersion(item.b, item.f, ch, hmd))
        - sens.beta_lat * _as_array(latency(item.b, ch))
        - item.r
    )


def utility_matrix(
    menu: ContractMenu,
    grid: TypeGrid,
    ch: ChannelParams,
    hmd: HMDParams,
    sens: SensitivityParams,
) -> np.ndarray:
    """Per-type buyer utilities U_{m,n} as an (M, N) array."""
    menu.check_dims(grid)
    imm = _as_array(immersion(menu.b, menu.f, ch, hmd))
    lat = _as_array(latency(menu.b, ch))
    return sens.alpha_imm * imm - sens.beta_lat * lat - menu.r


def eut_expected(menu, grid, ch, hmd, sens) -> float:
    """Expected buyer utility sum Q_{m,n} * U_{m,n}."""
    return float(np.sum(grid.q * utility_matrix(menu, grid, ch, hmd, sens)))


def prob_weight(p, coeff: float):
    """Inverse-S probability weighting exp(-(-ln p)^coeff) on (0, 1]."""
    p = _as_array(p)
    if np.any(p <= 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in (0, 1]")
    out = np.exp(-((-np.log(p)) ** coeff))
    if out.ndim == 0:
        return float(out)
    return out


def pt_value(u, pt: PTParams):
    """Reference-dependent value: gains curve above u_ref, loss-averse below."""
    u = _as_array(u)
    gain = np.where(u >= pt.u_ref, u - pt.u_ref, 0.0)
    loss = np.where(u < pt.u_ref, pt.u_ref - u, 0.0)
    out = np.where(
        u >= pt.u_ref,
        gain**pt.delta_plus,
        -pt.kappa * loss**pt.delta_minus,
    )
    if out.ndim == 0:
        return float(out)
    return out


def pt_expected(menu, grid, ch, hmd, sens, pt: PTParams) -> float:
    """Prospect-theory expected buyer utility over all type pairs.

    Weights are the raw probabilities Q_{m,n}, or their inverse-S transform
    when ``pt.use_weighting`` is on.
    """
    u = utility_matrix(menu, grid, ch, hmd, sens)
    if pt.use_weighting:
        # zero-probability cells contribute nothing; transform only positives
        w = np.zeros_like(grid.q)
        pos = grid.q > 0
        w[pos] = prob_weight(grid.q[pos], pt.weight_coeff)
    else:
        w = grid.q
    return float(np.sum(w * pt_value(u, pt)))


def dbm_to_watts(x: float) -> float:
    """dBm to watts: 10^((x - 30)/10)."""
    return 10.0 ** ((x - 30.0) / 10.0)


def db_to_linear(x: float) -> float:
    """dB to linear ratio: 10^(x/10)."""
    return 10.0 ** (x / 10.0)
