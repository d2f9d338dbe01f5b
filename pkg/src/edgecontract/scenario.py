"""Experiment configuration and scenario sampling.

Configs are flat INI-style key/value files with fixed sections; unknown keys
or sections are rejected.  The canonical serialization (sorted
``section.key=value`` lines) feeds the config hash recorded with every run.
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields

import numpy as np

from .diffusion import ActionBounds, GdmHyperparams, NoiseSchedule, Scenario
from .econ import (
    ChannelParams,
    HMDParams,
    PTParams,
    SensitivityParams,
    TypeGrid,
    db_to_linear,
    dbm_to_watts,
)
from .solver import SearchSpec

__all__ = ["ExperimentConfig", "sample_scenario", "load_config", "config_hash"]


@dataclass
class ScenarioConfig:
    n_sellers: int = 5
    m: int = 2
    n: int = 2
    theta1_range: tuple[float, float] = (10.0, 100.0)
    theta2_range: tuple[float, float] = (100.0, 200.0)
    sigma1_range: tuple[float, float] = (10.0, 100.0)
    sigma2_range: tuple[float, float] = (100.0, 200.0)
    power_dbm_range: tuple[float, float] = (20.0, 25.0)
    gain_db_range: tuple[float, float] = (-25.0, -22.0)
    noise_dbm: float = -95.0
    s_eff_range: tuple[float, float] = (1.0, 3.0)
    resolution: float = 2160.0 * 1200.0
    framerate: float = 90.0
    # bandwidth is tracked in MHz: n0 below is per-MHz, t_th and mu are scaled
    # so both immersion terms stay numerically active over the action box
    bandwidth_unit_hz: float = 1e6
    t_th: float = 1e6
    zeta1: float = 0.5
    zeta2: float = 0.5
    mu_range: tuple[float, float] = (0.1, 1.0)
    latency_c: float = 0.02
    distance_range: tuple[float, float] = (10.0, 100.0)
    alpha_imm: float = 0.05
    beta_lat: float = 0.5


@dataclass
class PTConfig:
    u_ref: float = 10.0
    kappa: float = 0.5
    delta_plus: float = 0.88
    delta_minus: float = 0.88
    weight_coeff: float = 1.0
    use_weighting: bool = False

    def to_params(self) -> PTParams:
        return PTParams(
            delta_plus=self.delta_plus,
            delta_minus=self.delta_minus,
            kappa=self.kappa,
            u_ref=self.u_ref,
            weight_coeff=self.weight_coeff,
            use_weighting=self.use_weighting,
        )


@dataclass
class TrainingConfig:
    episodes: int = 200
    steps: int = 3
    gamma: float = 1.0
    tau: float = 0.005
    explore_noise: float = 0.01
    explore_noise_final: float = -1.0  # < 0 means "no annealing"
    batch_size: int = 512
    actor_lr: float = 2e-7
    critic_lr: float = 2e-7
    buffer_capacity: int = 1_000_000
    hidden_width: int = 128
    hidden_layers: int = 3
    diffusion_steps: int = 3
    iota_lo: float = 1e-4
    iota_hi: float = 2e-2
    varpi: float = 0.0
    tanh_grad_floor: float = 0.0
    resample_each_step: bool = False
    penalty_weight: float = 1.0
    violations_only: bool = False
    r_max: float = 50.0

    def to_hyperparams(self) -> GdmHyperparams:
        return GdmHyperparams(
            gamma=self.gamma,
            tau=self.tau,
            explore_noise=self.explore_noise,
            explore_noise_final=(
                None if self.explore_noise_final < 0 else self.explore_noise_final
            ),
            batch_size=self.batch_size,
            varpi=self.varpi,
            tanh_grad_floor=self.tanh_grad_floor,
            actor_lr=self.actor_lr,
            critic_lr=self.critic_lr,
            buffer_capacity=self.buffer_capacity,
            hidden_width=self.hidden_width,
            hidden_layers=self.hidden_layers,
        )

    def to_schedule(self) -> NoiseSchedule:
        return NoiseSchedule(iota=np.linspace(self.iota_lo, self.iota_hi, self.diffusion_steps))


@dataclass
class SearchConfig:
    b_min: float = 0.0
    b_max: float = 10.0
    f_min: float = 0.0
    f_max: float = 3.0
    grid_points: int = 5
    refine_iters: int = 40

    def to_spec(self) -> SearchSpec:
        return SearchSpec(
            b_range=(self.b_min, self.b_max),
            f_range=(self.f_min, self.f_max),
            grid_points=self.grid_points,
            refine_iters=self.refine_iters,
        )


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    pt: PTConfig = field(default_factory=PTConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    seed: int = 0
    out_dir: str = "runs"

    def bounds(self) -> ActionBounds:
        return ActionBounds(
            b_min=self.search.b_min,
            b_max=self.search.b_max,
            f_min=self.search.f_min,
            f_max=self.search.f_max,
            r_min=0.0,
            r_max=self.training.r_max,
        )


_SECTIONS = {
    "scenario": ScenarioConfig,
    "pt": PTConfig,
    "training": TrainingConfig,
    "search": SearchConfig,
}


def _parse_value(text: str, kind):
    if kind is bool or kind == "bool":
        low = text.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is str:
        return text
    # tuple[float, float] ranges, comma separated
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated numbers: {text!r}")
    return (parts[0], parts[1])


def load_config(path: str | None = None, text: str | None = None) -> ExperimentConfig:
    """Load and validate a config file; unknown sections/keys are errors."""
    parser = configparser.ConfigParser()
    if text is not None:
        parser.read_string(text)
    elif path is not None:
        read = parser.read(path)
        if not read:
            raise FileNotFoundError(path)
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section == "run":
            for key, val in parser.items(section):
                if key == "seed":
                    cfg.seed = int(val)
                elif key == "out_dir":
                    cfg.out_dir = val
                else:
                    raise ValueError(f"unknown key [run] {key}")
            continue
        if section not in _SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        target = getattr(cfg, section)
        known = {f.name: f.type for f in fields(target)}
        type_map = {f.name: type(getattr(target, f.name)) for f in fields(target)}
        for key, val in parser.items(section):
            if key not in known:
                raise ValueError(f"unknown key [{section}] {key}")
            kind = type_map[key]
            if kind is tuple:
                kind = "range"
            setattr(target, key, _parse_value(val, kind if kind != "range" else tuple))
    return cfg


def canonical_serialization(cfg: ExperimentConfig) -> str:
    """Sorted section.key=value lines; stable across platforms."""
    lines = []
    for section, obj in (
        ("scenario", cfg.scenario),
        ("pt", cfg.pt),
        ("training", cfg.training),
        ("search", cfg.search),
    ):
        for f in fields(obj):
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{section}.{f.name}={v}")
    lines.append(f"run.seed={cfg.seed}")
    return "\n".join(sorted(lines))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_serialization(cfg).encode()).hexdigest()[:16]


def _sample_increasing_pair(rng, lo_range, hi_range):
    lo = rng.uniform(*lo_range)
    hi = rng.uniform(*hi_range)
    while hi <= lo:  # shared endpoint: resample exact ties
        hi = rng.uniform(*hi_range)
    return lo, hi


def sample_scenario(cfg: ExperimentConfig, rng: np.random.Generator) -> Scenario:
    """Draw one scenario: types, channel, display and preference parameters."""
    sc = cfg.scenario
    if sc.m != 2 or sc.n != 2:
        raise ValueError("scenario sampling is defined for 2x2 type grids")

    theta = np.array(_sample_increasing_pair(rng, sc.theta1_range, sc.theta2_range))
    sigma = np.array(_sample_increasing_pair(rng, sc.sigma1_range, sc.sigma2_range))
    q = rng.uniform(0.5, 1.0, size=(2, 2))
    q = q / q.sum()

    shape = (sc.m, sc.n)
    p = np.array([[dbm_to_watts(x) for x in row] for row in
                  rng.uniform(*sc.power_dbm_range, size=shape)])
    g2 = np.array([[db_to_linear(x) for x in row] for row in
                   rng.uniform(*sc.gain_db_range, size=shape)])
    n0 = dbm_to_watts(sc.noise_dbm) * sc.bandwidth_unit_hz  # per bandwidth unit
    d = rng.uniform(*sc.distance_range, size=shape)
    ch = ChannelParams(p=p, g2=g2, n0=n0, c=sc.latency_c, d=d)

    hmd = HMDParams(
        resolution=sc.resolution,
        framerate=sc.framerate,
        s_eff=rng.uniform(*sc.s_eff_range, size=shape),
        t_th=sc.t_th,
        zeta1=sc.zeta1,
        zeta2=sc.zeta2,
        mu=rng.uniform(*sc.mu_range, size=shape),
    )
    sens = SensitivityParams(alpha_imm=sc.alpha_imm, beta_lat=sc.beta_lat)
    grid = TypeGrid(theta=theta, sigma=sigma, q=q)
    return Scenario(
        grid=grid, ch=ch, hmd=hmd, sens=sens, pt=cfg.pt.to_params(), n_sellers=sc.n_sellers
    )
