"""Closed-form privacy calculus: shuffle amplification for the discrete
randomizer, subsampling amplification, sequential and advanced composition,
and the vector-level bounds that assemble them into protocol-level
(epsilon_c, delta_c) reports.

All logarithms are natural; epsilons are in nats throughout. Every
function is pure and reentrant, so parameter sweeps can run concurrently.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import Callable, IO, Iterable, Sequence

from .core import ConfigurationError, InvalidInputError, PrivacyParams, ProtocolConfig
from .randomizers import krr_gamma

__all__ = [
    "AmplificationReport",
    "DoubleDimBound",
    "ShuffleBound",
    "VectorBound",
    "compose_advanced",
    "compose_sequential",
    "double_dim_bound",
    "double_vector_bound",
    "protocol_report",
    "report_csv_row",
    "shuffle_amplify_krr",
    "simple_vector_bound",
    "subsample_amplify",
    "sweep_reports",
    "write_sweep_csv",
    "CSV_COLUMNS",
]

# Plug-in signature for numerically evaluated amplification bounds:
# (blanket probability gamma, population n, delta) -> central epsilon.
Amplifier = Callable[[float, int, float], float]


def _exp(x: float) -> float:
    """exp that saturates to +inf instead of raising OverflowError."""
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class ShuffleBound:
    """Shuffle-amplified central guarantee for one dimension.

    ``valid`` records whether epsilon falls in the window
    (validity_floor, 1] in which the closed form is a theorem; outside the
    window the value is still reported for curve plotting.
    """

    epsilon: float
    delta: float
    validity_floor: float
    valid: bool

    @property
    def params(self) -> PrivacyParams:
        return PrivacyParams(self.epsilon, self.delta)


def shuffle_amplify_krr(eps_l: float, b: int, n: int, delta_c: float) -> ShuffleBound:
    """Closed-form shuffle amplification for the discrete randomizer.

    epsilon_c = sqrt(14 * ln(2/delta_c) * (e^eps_l + b - 1) / (n - 1)),
    valid when sqrt(14 * ln(2/delta_c) * (b-1)/(n-1)) < epsilon_c <= 1.
    """
    if not eps_l > 0:
        raise InvalidInputError(f"eps_l must be positive, got {eps_l}")
    if b < 2:
        raise InvalidInputError(f"b must be >= 2, got {b}")
    if n < 2:
        raise InvalidInputError(f"n must be >= 2, got {n}")
    if not 0.0 < delta_c < 1.0:
        raise InvalidInputError(f"delta_c must lie in (0, 1), got {delta_c}")
    scale = 14.0 * math.log(2.0 / delta_c) / (n - 1)
    epsilon = math.sqrt(scale * (_exp(eps_l) + b - 1))
    floor = math.sqrt(scale * (b - 1))
    return ShuffleBound(
        epsilon=epsilon,
        delta=delta_c,
        validity_floor=floor,
        valid=floor < epsilon <= 1.0,
    )


def subsample_amplify(p: PrivacyParams, m: int, n: int) -> PrivacyParams:
    """Amplification by sampling m of n records without replacement:
    (ln(1 + (m/n)(e^eps - 1)), (m/n) * delta)."""
    if not 1 <= m <= n:
        raise InvalidInputError(f"need 1 <= m <= n, got m={m}, n={n}")
    ratio = m / n
    return PrivacyParams(
        epsilon=math.log1p(ratio * (_exp(p.epsilon) - 1.0)),
        delta=ratio * p.delta,
    )


def compose_sequential(eps: float, t: int) -> float:
    """t-fold adaptive composition of pure eps-DP mechanisms: t * eps."""
    if eps < 0:
        raise InvalidInputError(f"eps must be non-negative, got {eps}")
    if t < 1:
        raise InvalidInputError(f"t must be >= 1, got {t}")
    return t * eps


def compose_advanced(p: PrivacyParams, t: int, delta_prime: float) -> PrivacyParams:
    """t-fold adaptive composition:
    (sqrt(2 t ln(1/delta')) * eps + t * eps * (e^eps - 1), t*delta + delta')."""
    if t < 1:
        raise InvalidInputError(f"t must be >= 1, got {t}")
    if not 0.0 < delta_prime < 1.0:
        raise InvalidInputError(f"delta_prime must lie in (0, 1), got {delta_prime}")
    eps = p.epsilon
    epsilon = math.sqrt(2.0 * t * math.log(1.0 / delta_prime)) * eps + t * eps * (
        _exp(eps) - 1.0
    )
    return PrivacyParams(epsilon=epsilon, delta=t * p.delta + delta_prime)


@dataclass(frozen=True)
class VectorBound:
    """Vector-level guarantee with both composition branches retained.

    ``epsilon`` is the minimum of the linear branch and the advanced
    branch; both are kept for transparency.
    """

    epsilon: float
    delta: float
    linear_branch: float
    advanced_branch: float

    @property
    def params(self) -> PrivacyParams:
        return PrivacyParams(self.epsilon, self.delta)


def simple_vector_bound(eps_cd: float, delta_cd: float, d: int) -> VectorBound:
    """Compose d per-dimension guarantees into a vector guarantee:
    eps_c = d*eps_cd  ∧  eps_cd*sqrt(2 d ln(1/delta_cd)) + d*eps_cd*(e^eps_cd - 1),
    delta_c = delta_cd * (d + 1)."""
    if d < 1:
        raise InvalidInputError(f"d must be >= 1, got {d}")
    if not 0.0 < delta_cd < 1.0:
        raise InvalidInputError(f"delta_cd must lie in (0, 1), got {delta_cd}")
    linear = d * eps_cd
    advanced = eps_cd * math.sqrt(2.0 * d * math.log(1.0 / delta_cd)) + d * eps_cd * (
        _exp(eps_cd) - 1.0
    )
    return VectorBound(
        epsilon=min(linear, advanced),
        delta=delta_cd * (d + 1),
        linear_branch=linear,
        advanced_branch=advanced,
    )


@dataclass(frozen=True)
class DoubleDimBound:
    """Per-dimension guarantee of the subsample-pad-shuffle chain.

    ``eps_ck`` is the intermediate shuffle-only epsilon on the padded
    population; ``epsilon`` applies the subsampling step on top of it.
    """

    eps_ck: float
    epsilon: float
    delta: float
    shuffle_valid: bool

    @property
    def params(self) -> PrivacyParams:
        return PrivacyParams(self.epsilon, self.delta)


def double_dim_bound(
    eps_lk: float,
    b: int,
    beta: float,
    n_p: int,
    delta_cd: float,
    amplifier: Amplifier | None = None,
) -> DoubleDimBound:
    """Per-dimension bound for subsampling at rate beta followed by padding
    to n_p values and shuffling:

    eps_ck = sqrt(14 * ln(2*beta/delta_cd) * (e^eps_lk + b - 1) / (n_p - 1)),
    eps_cd = ln(1 + beta * (e^eps_ck - 1)).

    Requires delta_cd < 2*beta so the logarithm stays positive. Passing an
    ``amplifier`` replaces the closed-form shuffle step with a numerical
    bound evaluated at the same (population, delta) arguments.
    """
    if not 0.0 < beta <= 1.0:
        raise InvalidInputError(f"beta must lie in (0, 1], got {beta}")
    if n_p < 2:
        raise InvalidInputError(f"n_p must be >= 2, got {n_p}")
    if not delta_cd < 2.0 * beta:
        raise ConfigurationError(
            f"delta_cd={delta_cd} must be < 2*beta={2 * beta} for a positive logarithm"
        )
    delta_ck = delta_cd / beta
    if amplifier is not None:
        eps_ck = amplifier(krr_gamma(eps_lk, b), n_p, delta_ck)
        shuffle_valid = True
    else:
        inner = shuffle_amplify_krr(eps_lk, b, n_p, delta_ck)
        eps_ck = inner.epsilon
        shuffle_valid = inner.valid
    eps_cd = math.log1p(beta * (_exp(eps_ck) - 1.0))
    return DoubleDimBound(
        eps_ck=eps_ck, epsilon=eps_cd, delta=delta_cd, shuffle_valid=shuffle_valid
    )


def double_vector_bound(
    eps_cd: float, delta_cd: float, beta: float, d: int
) -> VectorBound:
    """Vector guarantee when each user perturbs a beta fraction of the d
    coordinates:
    eps_c = 2*beta*d*eps_cd ∧ (eps_cd*sqrt(4*beta*d*ln(1/delta_cd))
            + 2*beta*d*eps_cd*(e^eps_cd - 1)),
    delta_c = delta_cd * (2*beta*d + 1)."""
    if d < 1:
        raise InvalidInputError(f"d must be >= 1, got {d}")
    if not 0.0 < beta <= 1.0:
        raise InvalidInputError(f"beta must lie in (0, 1], got {beta}")
    if not 0.0 < delta_cd < 1.0:
        raise InvalidInputError(f"delta_cd must lie in (0, 1), got {delta_cd}")
    linear = 2.0 * beta * d * eps_cd
    advanced = eps_cd * math.sqrt(4.0 * beta * d * math.log(1.0 / delta_cd)) + linear * (
        _exp(eps_cd) - 1.0
    )
    return VectorBound(
        epsilon=min(linear, advanced),
        delta=delta_cd * (2.0 * beta * d + 1.0),
        linear_branch=linear,
        advanced_branch=advanced,
    )


def _compose_epoch(per_round: PrivacyParams, t: int, delta_prime: float) -> PrivacyParams:
    """Tighter of advanced and sequential composition over t rounds.

    Both are valid bounds; advanced wins for small per-round epsilon but
    overflows (and is loose) when e^eps is huge, where t*eps takes over.
    """
    eps = per_round.epsilon
    advanced = math.sqrt(2.0 * t * math.log(1.0 / delta_prime)) * eps + t * eps * (
        _exp(eps) - 1.0
    )
    if advanced <= t * eps:
        return PrivacyParams(advanced, t * per_round.delta + delta_prime)
    return PrivacyParams(t * eps, t * per_round.delta)


@dataclass(frozen=True)
class AmplificationReport:
    """Protocol-level privacy report.

    ``central`` is the per-epoch guarantee (the tighter of advanced and
    sequential composition of the per-round guarantee over
    rounds_per_epoch); ``magnification`` is the per-round amplification
    ratio eps_l / eps_c.
    """

    protocol: str
    d: int
    n: int
    n_p: int
    beta: float
    b: int
    local: PrivacyParams
    per_coordinate_local: float
    per_dim_central: PrivacyParams
    per_round_central: PrivacyParams
    central: PrivacyParams
    magnification: float
    shuffle_valid: bool
    eps_ck: float | None = None

    def __post_init__(self) -> None:
        if not self.magnification > 0:
            raise InvalidInputError("magnification must be positive")


def protocol_report(
    cfg: ProtocolConfig,
    rounds_per_epoch: int,
    delta_budget: float,
    subsampling: bool = True,
    n_s: int | None = None,
    amplifier: Amplifier | None = None,
) -> AmplificationReport:
    """Assemble the full privacy report for one protocol configuration.

    The per-epoch delta budget is split half to the composition slack
    delta' and half evenly across the rounds' central deltas. "simple"
    chains per-dimension shuffle amplification into the d-fold vector
    bound; "double"/"topk" chain the subsample-pad-shuffle bound into the
    2*beta*d-fold vector bound. Setting ``subsampling=False`` drops the
    subsampling step (shuffle-only ablation); ``n_s`` replaces the padded
    population with a pre-padding sample size. Only the discrete
    randomizer has a shipped closed form; other randomizers require an
    ``amplifier`` plug-in.
    """
    if rounds_per_epoch < 1:
        raise InvalidInputError(f"rounds_per_epoch must be >= 1, got {rounds_per_epoch}")
    if not 0.0 < delta_budget < 1.0:
        raise InvalidInputError(f"delta_budget must lie in (0, 1), got {delta_budget}")
    if cfg.randomizer != "krr" and amplifier is None:
        raise ConfigurationError(
            f"no closed-form amplification for randomizer {cfg.randomizer!r}; "
            "supply a numerical amplifier plug-in"
        )

    delta_prime = delta_budget / 2.0
    delta_c_round = delta_budget / (2.0 * rounds_per_epoch)
    eps_per_dim = cfg.per_dim_eps
    eps_ck: float | None = None

    if cfg.protocol == "simple":
        delta_cd = delta_c_round / (cfg.d + 1)
        if amplifier is not None:
            eps_cd = amplifier(krr_gamma(eps_per_dim, cfg.b), cfg.n, delta_cd)
            shuffle_valid = True
        else:
            inner = shuffle_amplify_krr(eps_per_dim, cfg.b, cfg.n, delta_cd)
            eps_cd = inner.epsilon
            shuffle_valid = inner.valid
        per_dim = PrivacyParams(eps_cd, delta_cd)
        vector = simple_vector_bound(eps_cd, delta_cd, cfg.d)
    else:
        count = n_s if n_s is not None else cfg.n_p
        delta_cd = delta_c_round / (2.0 * cfg.beta * cfg.d + 1.0)
        dim = double_dim_bound(
            eps_per_dim, cfg.b, cfg.beta, count, delta_cd, amplifier=amplifier
        )
        eps_ck = dim.eps_ck
        shuffle_valid = dim.shuffle_valid
        eps_cd = dim.epsilon if subsampling else dim.eps_ck
        per_dim = PrivacyParams(eps_cd, delta_cd)
        vector = double_vector_bound(eps_cd, delta_cd, cfg.beta, cfg.d)

    per_round = vector.params
    central = _compose_epoch(per_round, rounds_per_epoch, delta_prime)

    return AmplificationReport(
        protocol=cfg.protocol,
        d=cfg.d,
        n=cfg.n,
        n_p=cfg.n_p,
        beta=cfg.beta,
        b=cfg.b,
        local=PrivacyParams(cfg.eps_l),
        per_coordinate_local=eps_per_dim,
        per_dim_central=per_dim,
        per_round_central=per_round,
        central=central,
        magnification=cfg.eps_l / per_round.epsilon,
        shuffle_valid=shuffle_valid,
        eps_ck=eps_ck,
    )


# ---------------------------------------------------------------------------
# Curve sweeps
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "protocol",
    "d",
    "n",
    "n_p",
    "beta",
    "b",
    "eps_l",
    "eps_per_dim",
    "eps_c",
    "delta_c",
    "magnification",
)


def report_csv_row(report: AmplificationReport) -> list:
    """One sweep CSV row; eps_c/delta_c are the per-round central values."""
    return [
        report.protocol,
        report.d,
        report.n,
        report.n_p,
        repr(report.beta),
        report.b,
        repr(report.local.epsilon),
        repr(report.per_coordinate_local),
        repr(report.per_round_central.epsilon),
        repr(report.per_round_central.delta),
        repr(report.magnification),
    ]


def sweep_reports(
    protocols: Sequence[str],
    d: int,
    grid_n: Sequence[int],
    grid_eps_per_dim: Sequence[float],
    grid_beta: Sequence[float],
    b: int,
    delta_budget: float,
    rounds_per_epoch: int = 1,
    n_p_rule: str = "n",
) -> Iterable[AmplificationReport]:
    """Cartesian sweep of amplification reports for curve plotting.

    Per-coordinate budgets are matched across protocols: each swept
    eps_per_dim fixes eps_l = d*eps_per_dim for "simple" and
    k*eps_per_dim for "double"/"topk". ``n_p_rule`` chooses the padding
    target: "n" pads to the full round population (the aligned-comparison
    convention), "n_beta" to the expected sample size.
    """
    if n_p_rule not in ("n", "n_beta"):
        raise InvalidInputError(f"unknown n_p rule {n_p_rule!r}")
    for protocol, n, eps_dim, beta in itertools.product(
        protocols, grid_n, grid_eps_per_dim, grid_beta
    ):
        if protocol == "simple":
            k, l, n_p = d, 1, 1
        else:
            k = max(1, round(beta * d))
            l = 1
            n_p = n if n_p_rule == "n" else max(2, round(n * k / d))
        cfg = ProtocolConfig(
            protocol=protocol,
            d=d,
            n=n,
            k=k,
            eps_l=eps_dim * k,
            n_p=n_p,
            l=l,
            b=b,
        )
        yield protocol_report(cfg, rounds_per_epoch, delta_budget)


def write_sweep_csv(reports: Iterable[AmplificationReport], fh: IO[str]) -> int:
    """Write sweep rows with the pinned column order; returns row count."""
    writer = csv.writer(fh)
    writer.writerow(CSV_COLUMNS)
    count = 0
    for report in reports:
        writer.writerow(report_csv_row(report))
        count += 1
    return count
