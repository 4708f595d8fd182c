# measure.py - Measurement plans, Born probabilities, coincidence simulation and element estimators

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import math

import numpy as np
import pandas as pd

from utils import (
    log_message, compensated_sum,
    InvalidParameterError, DimensionMismatchError, IncompleteDataError,
    UndefinedVisibilityError, ValidationError,
)
from qstate import _as_density, _check_dim
from config import *

COUNTS_COLUMNS = [
    "label", "i_a", "j_a", "basis_a", "sign_a",
    "i_b", "j_b", "basis_b", "sign_b", "counts", "duration_s",
]
SIGNS = (1, -1)
SUBSPACE_KINDS = ("X", "Y")

# -----------------------
# TYPES
# -----------------------

@dataclass(frozen=True)
class ArmSetting:
    """Single-outcome projector of one arm: Z (path i), or an X/Y eigenvector in subspace (i, j)"""
    basis: str
    i: int
    j: int
    sign: int = 1

    def __post_init__(self):
        if self.basis not in ("Z", "X", "Y"):
            raise ValidationError(f"unknown basis {self.basis!r}")
        if self.sign not in SIGNS:
            raise ValidationError(f"sign must be +1 or -1, got {self.sign}")
        if self.basis == "Z" and self.i != self.j:
            raise ValidationError("Z settings name a single path (i == j)")
        if self.basis != "Z" and not 0 <= self.i < self.j:
            raise ValidationError(f"subspace settings need 0 <= i < j, got ({self.i},{self.j})")

    @property
    def sign_char(self):
        return "+" if self.sign > 0 else "-"

    @property
    def token(self):
        if self.basis == "Z":
            return f"Z{self.i}"
        return f"{self.basis}{self.sign_char}{self.i}.{self.j}"

    def vector(self, d):
        """Projector vector in C^d; Y uses (|i> + s*i|j>)/sqrt(2)"""
        if max(self.i, self.j) >= d:
            raise DimensionMismatchError(f"path {max(self.i, self.j)} outside dimension {d}")
        vec = np.zeros(d, dtype=complex)
        if self.basis == "Z":
            vec[self.i] = 1.0
        else:
            phase = 1.0 if self.basis == "X" else 1j
            vec[self.i] = 1.0 / np.sqrt(2.0)
            vec[self.j] = self.sign * phase / np.sqrt(2.0)
        return vec


def setting_label(arm_a, arm_b):
    return f"{arm_a.token}|{arm_b.token}"

def diagonal_label(i, j):
    return f"Z{i}|Z{j}"

def subspace_label(i, j, kind_a, sign_a, kind_b, sign_b):
    return setting_label(ArmSetting(kind_a, i, j, sign_a), ArmSetting(kind_b, i, j, sign_b))


@dataclass(frozen=True, eq=False)
class ProjectiveSetting:
    """Product projector |v_a><v_a| (x) |v_b><v_b| with its label"""
    label: str
    vec_a: np.ndarray
    vec_b: np.ndarray
    arm_a: ArmSetting = None
    arm_b: ArmSetting = None

    def __post_init__(self):
        for name in ("vec_a", "vec_b"):
            vec = np.asarray(getattr(self, name), dtype=complex).reshape(-1)
            if abs(np.vdot(vec, vec).real - 1.0) > NORM_TOL:
                raise ValidationError(f"{name} of setting {self.label} is not unit norm")
            object.__setattr__(self, name, vec)

    @classmethod
    def from_arms(cls, arm_a, arm_b, d):
        return cls(setting_label(arm_a, arm_b), arm_a.vector(d), arm_b.vector(d), arm_a, arm_b)


@dataclass(frozen=True, eq=False)
class ExperimentPlan:
    dim: int
    settings: tuple
    full_grid: bool = False
    include_mixed: bool = False

    def __len__(self):
        return len(self.settings)

    def __iter__(self):
        return iter(self.settings)

    def labels(self):
        return [s.label for s in self.settings]


@dataclass(frozen=True)
class SubspaceObservable:
    """sigma_kind_a (x) sigma_kind_b restricted to the two-path subspace (i, j)"""
    i: int
    j: int
    kind_a: str = "X"
    kind_b: str = "X"

    def __post_init__(self):
        if not 0 <= self.i < self.j:
            raise ValidationError(f"subspace needs i < j, got ({self.i},{self.j})")
        if self.kind_a not in SUBSPACE_KINDS or self.kind_b not in SUBSPACE_KINDS:
            raise ValidationError("observable kinds must be X or Y")

    def labels(self):
        """(sign product, label) for the four outcome settings"""
        return [
            (sa * sb, subspace_label(self.i, self.j, self.kind_a, sa, self.kind_b, sb))
            for sa, sb in product(SIGNS, SIGNS)
        ]

    def operator(self, d):
        """Full d^2 x d^2 operator, used as the trace oracle"""
        return np.kron(_pauli(self.kind_a, self.i, self.j, d), _pauli(self.kind_b, self.i, self.j, d))


@lru_cache(maxsize=None)
def observable_labels(i, j, kind_a, kind_b):
    """Cached (sign product, label) pairs of a subspace observable"""
    return tuple(SubspaceObservable(i, j, kind_a, kind_b).labels())

def _pauli(kind, i, j, d):
    op = np.zeros((d, d), dtype=complex)
    if kind == "X":
        op[i, j] = op[j, i] = 1.0
    else:
        op[i, j], op[j, i] = -1j, 1j
    return op


@dataclass(frozen=True)
class CountsRecord:
    """Coincidences recorded for one setting; `counts` holds the Poisson mean in exact mode"""
    label: str
    counts: float
    duration: float
    expected_rate: float = None
    arm_a: ArmSetting = field(default=None, compare=False)
    arm_b: ArmSetting = field(default=None, compare=False)

    def __post_init__(self):
        if self.counts < 0:
            raise ValidationError(f"negative counts for {self.label}")
        if not self.duration > 0:
            raise ValidationError(f"duration must be positive for {self.label}")

    @property
    def rate(self):
        return self.counts / self.duration


@dataclass(frozen=True, eq=False)
class DiagonalData:
    """Estimated computational-basis populations <ij|rho|ij>"""
    d: int
    p_same: np.ndarray
    p_ab: dict
    total_rate: float = float("nan")
    cross_assumed: float = None  # None when every <ij|rho|ij> was measured

    def __post_init__(self):
        p = np.asarray(self.p_same, dtype=float)
        object.__setattr__(self, "p_same", p)
        if p.shape != (self.d,):
            raise DimensionMismatchError(f"expected {self.d} same-path populations")
        values = np.fromiter(self.p_ab.values(), dtype=float) if self.p_ab else p
        if np.any(values < -PROBABILITY_TOL) or np.any(values > 1 + PROBABILITY_TOL):
            raise ValidationError("population estimates must lie in [0, 1]")
        if self.N > 1 + PROBABILITY_TOL:
            raise ValidationError(f"N = {self.N!r} exceeds 1")

    @property
    def N(self):
        return compensated_sum(self.p_same)


@dataclass(frozen=True, eq=False)
class OffDiagonalData:
    """Estimated coherences <ii|rho|jj> for i < j"""
    d: int
    re: dict
    im: dict = None

    def coherence(self, i, j):
        im = self.im.get((i, j)) if self.im else None
        return Coherence(self.re[(i, j)], im)

    def cauchy_schwarz_violations(self, diag, slack=0.0):
        """Pairs with |Re| > (p_i + p_j)/2 + slack; slack is a scalar or a per-pair dict"""
        return [
            pair for pair, value in self.re.items()
            if abs(value) > 0.5 * (diag.p_same[pair[0]] + diag.p_same[pair[1]])
            + (slack[pair] if isinstance(slack, dict) else slack)
        ]


@dataclass(frozen=True)
class Coherence:
    """Estimate of <ii|rho|jj>; `im` is None when no mixed X/Y settings were measured"""
    re: float
    im: float = None

    @property
    def has_imag(self):
        return self.im is not None

    def __complex__(self):
        return complex(self.re, self.im if self.im is not None else 0.0)

# -----------------------
# PLANS AND PROBABILITIES
# -----------------------

def plan_full(d, full_grid=False, include_mixed=False):
    """
    Measurement plan: diagonal settings plus 8 product settings per pair i < j
    Args:
        d (int): local dimension
        full_grid (bool): measure all d^2 path pairs (i, j) instead of the d pairs (i, i)
        include_mixed (bool): add the X(x)Y and Y(x)X settings needed for imaginary parts
    Returns:
        ExperimentPlan: d + 8*C(d,2) settings in the default configuration
    """
    d = _check_dim(d)
    settings = []
    if full_grid:
        diag_pairs = [(i, j) for i in range(d) for j in range(d)]
    else:
        diag_pairs = [(i, i) for i in range(d)]
    for i, j in diag_pairs:
        settings.append(ProjectiveSetting.from_arms(ArmSetting("Z", i, i), ArmSetting("Z", j, j), d))

    kinds = [("X", "X"), ("Y", "Y")]
    if include_mixed:
        kinds += [("X", "Y"), ("Y", "X")]
    for i in range(d):
        for j in range(i + 1, d):
            for kind_a, kind_b in kinds:
                for sa, sb in product(SIGNS, SIGNS):
                    settings.append(ProjectiveSetting.from_arms(
                        ArmSetting(kind_a, i, j, sa), ArmSetting(kind_b, i, j, sb), d))

    log_message(f"Built plan for d={d}: {len(settings)} settings", "DEBUG")
    return ExperimentPlan(d, tuple(settings), full_grid, include_mixed)

def born_probability(rho, setting):
    """<v_a v_b|rho|v_a v_b>, evaluated on the support of the two vectors"""
    rho = _as_density(rho)
    va, vb = setting.vec_a, setting.vec_b
    if va.size != rho.dim_a or vb.size != rho.dim_b:
        raise DimensionMismatchError(
            f"setting {setting.label} is for {va.size}x{vb.size}, state is {rho.dim_a}x{rho.dim_b}"
        )
    ia, ib = np.flatnonzero(va), np.flatnonzero(vb)
    idx = (ia[:, None] * rho.dim_b + ib[None, :]).reshape(-1)
    vec = np.kron(va[ia], vb[ib])
    value = np.vdot(vec, rho.entries[np.ix_(idx, idx)] @ vec)
    return float(min(1.0, max(0.0, value.real)))

def accidental_rate(singles_a_hz, singles_b_hz, window_s):
    """Accidental coincidence rate singles_a * singles_b * window"""
    if singles_a_hz < 0 or singles_b_hz < 0 or window_s < 0:
        raise InvalidParameterError("singles rates and window must be nonnegative")
    return singles_a_hz * singles_b_hz * window_s

# -----------------------
# COUNT SIMULATION
# -----------------------

def setting_rng(seed, index):
    """Counter-based stream for one setting, independent of evaluation order"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))

class CountSimulator:
    def __init__(self, rate_hz=DEFAULT_RATE_HZ, efficiency=DEFAULT_EFFICIENCY,
                 duration_s=DEFAULT_DURATION_S, window_s=DEFAULT_COINCIDENCE_WINDOW_S,
                 singles_hz=DEFAULT_SINGLES_HZ):
        if not rate_hz > 0:
            raise InvalidParameterError(f"rate must be positive, got {rate_hz}")
        if not 0 < efficiency <= 1:
            raise InvalidParameterError(f"efficiency must lie in (0, 1], got {efficiency}")
        durations = np.atleast_1d(np.asarray(duration_s, dtype=float))
        if np.any(durations <= 0):
            raise InvalidParameterError("durations must be positive")
        self.rate_hz = float(rate_hz)
        self.efficiency = float(efficiency)
        self.duration_s = duration_s
        self.accidentals_hz = accidental_rate(singles_hz, singles_hz, window_s)

    def _durations(self, n):
        durations = np.asarray(self.duration_s, dtype=float)
        if durations.ndim == 0:
            return np.full(n, float(durations))
        if durations.size != n:
            raise DimensionMismatchError(f"{durations.size} durations for {n} settings")
        return durations

    def simulate(self, rho, plan, seed=DEFAULT_SEED, exact=False):
        """
        Simulate coincidence counts for every setting of a plan
        Args:
            rho (BipartiteDensityMatrix): source state
            plan (ExperimentPlan): settings to record
            seed (int): master seed; stream k is keyed by (seed, k)
            exact (bool): store the Poisson mean instead of a sample
        Returns:
            list: CountsRecord per setting, in plan order
        """
        rho = _as_density(rho)
        durations = self._durations(len(plan))
        mode = "exact" if exact else f"seed={seed}"
        log_message(f"Simulating {len(plan)} settings at d={plan.dim} ({mode})")

        records = []
        for index, (setting, duration) in enumerate(zip(plan, durations)):
            expected_rate = born_probability(rho, setting) * self.rate_hz * self.efficiency
            expected_rate += self.accidentals_hz
            lam = expected_rate * duration
            counts = lam if exact else int(setting_rng(seed, index).poisson(lam))
            records.append(CountsRecord(setting.label, counts, float(duration), expected_rate,
                                        setting.arm_a, setting.arm_b))
        log_message(f"Simulated {sum(r.counts for r in records):.0f} coincidences in total", "DEBUG")
        return records

def simulate_counts(rho, plan, rate_hz=DEFAULT_RATE_HZ, duration_s=DEFAULT_DURATION_S,
                    efficiency=DEFAULT_EFFICIENCY, seed=DEFAULT_SEED, exact=False,
                    singles_hz=DEFAULT_SINGLES_HZ, window_s=DEFAULT_COINCIDENCE_WINDOW_S):
    """Poisson coincidence counts for a plan (see CountSimulator.simulate)"""
    simulator = CountSimulator(rate_hz, efficiency, duration_s, window_s, singles_hz)
    return simulator.simulate(rho, plan, seed=seed, exact=exact)

# -----------------------
# RATE TABLE
# -----------------------

class RateTable:
    """Coincidence rates keyed by setting label"""

    def __init__(self, rates, variances=None):
        self.rates = dict(rates)
        self.variances = dict(variances or {})
        z_paths = [
            int(part[1:]) for label in self.rates if label.startswith("Z")
            for part in label.split("|")
        ]
        self.dim = max(z_paths) + 1 if z_paths else 0

    @classmethod
    def from_records(cls, records):
        if isinstance(records, RateTable):
            return records
        records = list(records)
        return cls(((r.label, r.counts / r.duration) for r in records),
                   ((r.label, r.counts / r.duration ** 2) for r in records))

    @classmethod
    def from_arrays(cls, labels, counts, durations):
        counts = np.asarray(counts, dtype=float)
        durations = np.asarray(durations, dtype=float)
        return cls(zip(labels, counts / durations), zip(labels, counts / durations ** 2))

    def __contains__(self, label):
        return label in self.rates

    def missing(self, labels):
        return [label for label in labels if label not in self.rates]

    def require(self, labels, what):
        missing = self.missing(labels)
        if missing:
            raise IncompleteDataError(f"cannot estimate {what}", missing)

    def rate(self, label):
        return self.rates[label]

    def rate_variance(self, label):
        """Poisson variance of a rate; 0 when the table was built from rates alone"""
        return self.variances.get(label, 0.0)

    def has_full_grid(self, paths):
        return all(diagonal_label(i, j) in self.rates for i in paths for j in paths)

    def has_mixed(self, i, j):
        return all(label in self.rates for _, label in observable_labels(i, j, "X", "Y"))


def total_rate(records, d, crosstalk_assumed=CROSSTALK_ASSUMED):
    """
    C_T over the path block {0..d-1}: the full diagonal grid when present,
    else the d same-path rates scaled up for (d^2-d) assumed cross populations
    """
    table = RateTable.from_records(records)
    paths = range(d)
    if table.has_full_grid(paths):
        return compensated_sum(table.rate(diagonal_label(i, j)) for i in paths for j in paths), None

    table.require([diagonal_label(i, i) for i in paths], f"C_T for d={d}")
    unmeasured = (d * d - d) * crosstalk_assumed
    if unmeasured >= 1.0:
        raise InvalidParameterError(f"assumed crosstalk {crosstalk_assumed} leaves no weight at d={d}")
    same = compensated_sum(table.rate(diagonal_label(i, i)) for i in paths)
    return same / (1.0 - unmeasured), crosstalk_assumed

# -----------------------
# ESTIMATORS
# -----------------------

def estimate_diagonals(records, d, crosstalk_assumed=CROSSTALK_ASSUMED):
    """
    <ij|rho|ij> = C(ij)/C_T on the block {0..d-1}
    Args:
        records: CountsRecord list or RateTable
        d (int): block dimension
        crosstalk_assumed (float): value used for unmeasured i != j populations
    Returns:
        DiagonalData
    """
    table = RateTable.from_records(records)
    c_total, assumed = total_rate(table, d, crosstalk_assumed)
    if c_total <= 0:
        raise IncompleteDataError(f"no diagonal coincidences recorded for d={d}")

    p_ab = {}
    for i in range(d):
        for j in range(d):
            label = diagonal_label(i, j)
            if label in table:
                p_ab[(i, j)] = table.rate(label) / c_total
            else:
                p_ab[(i, j)] = assumed
    p_same = np.array([p_ab[(i, i)] for i in range(d)])
    return DiagonalData(d, p_same, p_ab, c_total, assumed)

def estimate_correlator(records, i, j, kind_a, kind_b, total=None, d=None,
                        crosstalk_assumed=CROSSTALK_ASSUMED):
    """sum_{s,t} s*t*C(s,t)/C_T for sigma_kind_a (x) sigma_kind_b in subspace (i, j)"""
    table = RateTable.from_records(records)
    weighted = observable_labels(i, j, kind_a, kind_b)
    table.require([label for _, label in weighted], f"<s{kind_a} s{kind_b}> on ({i},{j})")
    if total is None:
        total, _ = total_rate(table, d or table.dim, crosstalk_assumed)
    return compensated_sum(sign * table.rate(label) for sign, label in weighted) / total

def estimate_offdiag(records, i, j, total=None, d=None, crosstalk_assumed=CROSSTALK_ASSUMED):
    """
    <ii|rho|jj> from subspace correlators:
    Re = (<XX> - <YY>)/4, Im = -(<XY> + <YX>)/4 (only when mixed settings exist)
    """
    table = RateTable.from_records(records)
    if total is None:
        total, _ = total_rate(table, d or table.dim, crosstalk_assumed)
    xx = estimate_correlator(table, i, j, "X", "X", total)
    yy = estimate_correlator(table, i, j, "Y", "Y", total)
    im = None
    if table.has_mixed(i, j):
        xy = estimate_correlator(table, i, j, "X", "Y", total)
        yx = estimate_correlator(table, i, j, "Y", "X", total)
        im = -0.25 * (xy + yx)
    return Coherence(0.25 * (xx - yy), im)

def estimate_offdiagonals(records, d, total=None, crosstalk_assumed=CROSSTALK_ASSUMED):
    """Coherence estimates for every pair i < j of the block {0..d-1}"""
    table = RateTable.from_records(records)
    if total is None:
        total, _ = total_rate(table, d, crosstalk_assumed)
    re, im = {}, {}
    for i in range(d):
        for j in range(i + 1, d):
            coherence = estimate_offdiag(table, i, j, total)
            re[(i, j)] = coherence.re
            if coherence.has_imag:
                im[(i, j)] = coherence.im
    return OffDiagonalData(d, re, im or None)

def coherence_sigma(records, i, j, total):
    """Poisson standard deviation of Re<ii|rho|jj> at fixed C_T"""
    table = RateTable.from_records(records)
    labels = [label for kind in SUBSPACE_KINDS for _, label in observable_labels(i, j, kind, kind)]
    return math.sqrt(compensated_sum(table.rate_variance(label) for label in labels)) / (4.0 * total)

def population_sigma(records, i, total):
    """Poisson standard deviation of <ii|rho|ii> at fixed C_T"""
    table = RateTable.from_records(records)
    return math.sqrt(table.rate_variance(diagonal_label(i, i))) / total

def visibility(records, i, j):
    """
    Two-path interference visibility V = (<XX> - <YY>) / (2 (p_ii + p_jj)),
    i.e. 2 Re<ii|rho|jj> / (p_ii + p_jj); independent of C_T
    """
    table = RateTable.from_records(records)
    table.require([diagonal_label(i, i), diagonal_label(j, j)], f"visibility on ({i},{j})")
    population = table.rate(diagonal_label(i, i)) + table.rate(diagonal_label(j, j))
    if population <= 0:
        raise UndefinedVisibilityError(f"no population in subspace ({i},{j})")
    xx = estimate_correlator(table, i, j, "X", "X", total=1.0)
    yy = estimate_correlator(table, i, j, "Y", "Y", total=1.0)
    return (xx - yy) / (2.0 * population)

def average_visibility(records, d):
    values = [visibility(records, i, j) for i in range(d) for j in range(i + 1, d)]
    return float(np.mean(values)), float(np.std(values))

# -----------------------
# COUNTS FILE
# -----------------------

def _format_count(value):
    value = float(value)
    return str(int(value)) if value.is_integer() else repr(value)

def records_to_frame(records):
    rows = []
    for r in records:
        if r.arm_a is None or r.arm_b is None:
            raise ValidationError(f"record {r.label} carries no arm description")
        rows.append({
            "label": r.label,
            "i_a": r.arm_a.i, "j_a": r.arm_a.j, "basis_a": r.arm_a.basis, "sign_a": r.arm_a.sign_char,
            "i_b": r.arm_b.i, "j_b": r.arm_b.j, "basis_b": r.arm_b.basis, "sign_b": r.arm_b.sign_char,
            "counts": _format_count(r.counts),
            "duration_s": repr(float(r.duration)),
        })
    return pd.DataFrame(rows, columns=COUNTS_COLUMNS)

def write_counts_csv(records, path):
    """Write records in the counts-file schema (one row per setting)"""
    records_to_frame(records).to_csv(path, index=False, lineterminator="\n")
    log_message(f"Wrote {len(records)} count records to {path}")
    return path

def read_counts_csv(path):
    """Read a counts file back into CountsRecord objects"""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing_cols = [c for c in COUNTS_COLUMNS if c not in frame.columns]
    if missing_cols:
        raise ValidationError(f"counts file {path} lacks columns {missing_cols}")

    records = []
    for row in frame.itertuples(index=False):
        arm_a = ArmSetting(row.basis_a, int(row.i_a), int(row.j_a), 1 if row.sign_a == "+" else -1)
        arm_b = ArmSetting(row.basis_b, int(row.i_b), int(row.j_b), 1 if row.sign_b == "+" else -1)
        if setting_label(arm_a, arm_b) != row.label:
            raise ValidationError(f"label {row.label!r} does not match its arm columns")
        counts = int(row.counts) if row.counts.isdigit() else float(row.counts)
        records.append(CountsRecord(row.label, counts, float(row.duration_s), None, arm_a, arm_b))
    log_message(f"Read {len(records)} count records from {path}", "DEBUG")
    return records
