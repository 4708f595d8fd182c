# pipeline.py - Run configuration, simulate/certify/compile orchestration and report output

from dataclasses import dataclass, field, asdict, fields as dataclass_fields
import hashlib
import json
import os

import numpy as np
import pandas as pd
from rich import box
from rich.table import Table

from utils import (
    log_message, config_hash, is_power_of_two,
    InvalidDimensionError, InvalidParameterError, ValidationError, VerificationError,
)
from qstate import build_state, is_supported_pipeline_dim, NOISE_KINDS
from measure import plan_full, CountSimulator, write_counts_csv, read_counts_csv
from certify import Certifier, CertReport, separability_threshold
from optics import (
    network_compiler, render_table, summarize_verification, column_names,
)
from config import *

NOISE_PARAMS = {"white": "p", "dephase": "sigma", "crosstalk": "eps"}
PROVENANCE_KEYS = ("config_hash", "seed", "tool_version")

# -----------------------
# CONFIGURATION
# -----------------------

def parse_noise(text):
    """
    Parse 'white:0.9,dephase:0.1,crosstalk:1e-5' into a noise stack
    Returns:
        list: [{kind, params}] in the listed order
    """
    stack = []
    for item in (text or "").split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, value = item.partition(":")
        kind = kind.strip().lower()
        if kind not in NOISE_PARAMS or not value:
            raise InvalidParameterError(f"bad noise term {item!r}, expected one of {NOISE_KINDS} as kind:value")
        stack.append({"kind": kind, "params": {NOISE_PARAMS[kind]: float(value)}})
    return stack

def default_dims(dim):
    """Even dimensions 2..dim"""
    return list(range(2, int(dim) + 1, 2))


@dataclass
class RunConfig:
    dim: int = DEFAULT_DIM
    amplitudes: list = None
    noise: list = field(default_factory=list)
    rate_hz: float = DEFAULT_RATE_HZ
    efficiency: float = DEFAULT_EFFICIENCY
    coincidence_window_s: float = DEFAULT_COINCIDENCE_WINDOW_S
    duration_s: float = DEFAULT_DURATION_S
    campaign_s: float = None  # when set, split evenly over the settings
    singles_hz: float = DEFAULT_SINGLES_HZ
    seed: int = DEFAULT_SEED
    n_resamples: int = DEFAULT_RESAMPLES
    crosstalk_assumed: float = CROSSTALK_ASSUMED
    dims: list = None
    full_grid: bool = False
    include_mixed: bool = False
    exact: bool = False

    def __post_init__(self):
        self.dim = int(self.dim)
        if not is_supported_pipeline_dim(self.dim):
            raise InvalidDimensionError(f"dim must be a power of 2 in [2, {MAX_PIPELINE_DIM}], got {self.dim}")
        for name in ("rate_hz", "efficiency", "coincidence_window_s", "duration_s"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.campaign_s is not None and not self.campaign_s > 0:
            raise InvalidParameterError(f"campaign_s must be positive, got {self.campaign_s}")
        if self.singles_hz < 0 or not 0 <= self.crosstalk_assumed < 1:
            raise InvalidParameterError("singles_hz and crosstalk_assumed must be nonnegative")
        if self.amplitudes is not None and len(self.amplitudes) != self.dim:
            raise ValidationError(f"{len(self.amplitudes)} amplitudes for dim={self.dim}")
        self.dims = [int(d) for d in (self.dims or default_dims(self.dim))]
        if any(d < 2 or d > self.dim for d in self.dims):
            raise ValidationError(f"dims {self.dims} must lie in [2, {self.dim}]")
        self.noise = [dict(step) for step in (self.noise or [])]

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclass_fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown config keys {unknown}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def with_overrides(self, **overrides):
        """Copy with every non-None override applied"""
        data = self.to_dict()
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if "dim" in overrides and "dims" not in overrides:
            data["dims"] = None
        data.update(overrides)
        return RunConfig.from_dict(data)

    def to_dict(self):
        data = asdict(self)
        if data["amplitudes"] is not None:
            data["amplitudes"] = [_encode_amplitude(a) for a in data["amplitudes"]]
        return data

    def state_document(self):
        amplitudes = None
        if self.amplitudes is not None:
            amplitudes = [_decode_amplitude(a) for a in self.amplitudes]
        return {"dim": self.dim, "amplitudes": amplitudes, "noise": self.noise, "seed": self.seed}

    def config_hash(self):
        return config_hash(self.to_dict())

    def save(self, path):
        return _write_json(self.to_dict(), path)


def _encode_amplitude(a):
    if isinstance(a, (list, tuple)):
        return [float(a[0]), float(a[1])]
    a = complex(a)
    return [a.real, a.imag] if a.imag else a.real

def _decode_amplitude(a):
    if isinstance(a, (list, tuple)):
        return complex(a[0], a[1])
    return complex(a)

# -----------------------
# REPORT DOCUMENT
# -----------------------

@dataclass
class ReportDocument:
    report: CertReport
    provenance: dict

    def __post_init__(self):
        missing = [k for k in PROVENANCE_KEYS if k not in (self.provenance or {})]
        if missing:
            raise ValidationError(f"report provenance lacks {missing}")

    def to_dict(self):
        data = self.report.to_dict()
        data["provenance"] = dict(self.provenance)
        return data

    @classmethod
    def from_dict(cls, data):
        return cls(CertReport.from_dict(data), dict(data.get("provenance") or {}))

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def save(self, path):
        return _write_json(self.to_dict(), path)

    def plot_frame(self):
        return pd.DataFrame(self.report.plot_rows(), columns=["d", "F", "F_sep", "k_witness", "eof"])


def _file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()

def _write_json(data, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path

# -----------------------
# RUNNER
# -----------------------

class PipelineRunner:
    def __init__(self, out_dir=OUTPUT_DIR):
        self.out_dir = out_dir

    def _target(self, out_dir):
        out_dir = out_dir or self.out_dir
        os.makedirs(out_dir, exist_ok=True)
        return out_dir

    def run_simulate(self, config, out_dir=None):
        """
        Simulate the full measurement campaign of a config and write the counts file
        Args:
            config (RunConfig): source, noise and detector parameters
            out_dir (str): output directory
        Returns:
            str: path of the counts CSV
        """
        out_dir = self._target(out_dir)
        log_message(f"Simulating campaign for dim={config.dim} (config {config.config_hash()[:12]})")

        rho = build_state(config.state_document())
        plan = plan_full(config.dim, full_grid=config.full_grid, include_mixed=config.include_mixed)
        duration = config.campaign_s / len(plan) if config.campaign_s else config.duration_s
        simulator = CountSimulator(config.rate_hz, config.efficiency, duration,
                                   config.coincidence_window_s, config.singles_hz)
        records = simulator.simulate(rho, plan, seed=config.seed, exact=config.exact)

        path = write_counts_csv(records, os.path.join(out_dir, COUNTS_FILE))
        config.save(os.path.join(out_dir, "config.json"))
        return path

    def run_certify(self, counts_path, dims=None, n_resamples=DEFAULT_RESAMPLES, seed=DEFAULT_SEED,
                    crosstalk_assumed=CROSSTALK_ASSUMED, out_dir=None, config=None):
        """
        Nested certification of a counts file with bootstrap errors
        Returns:
            ReportDocument: also written as report.json, with plot.csv next to it
        """
        out_dir = self._target(out_dir)
        records = read_counts_csv(counts_path)
        if dims is None:
            dims = config.dims if config is not None else None
        if dims is None:
            dims = default_dims(max(r.arm_a.i for r in records if r.arm_a.basis == "Z") + 1)

        if (config is not None and crosstalk_assumed > 0 and not config.full_grid
                and not any(step.get("kind") == "crosstalk" for step in config.noise)):
            log_message(f"Assuming cross population {crosstalk_assumed:g} for a source without crosstalk; "
                        "the fidelity is biased low unless it is set to 0", "WARNING")
        certifier = Certifier(crosstalk_assumed)
        report = certifier.nested_analysis(records, dims, n_resamples=n_resamples, seed=seed)

        settings = {
            "counts_sha256": _file_sha256(counts_path),
            "dims": list(dims),
            "n_resamples": int(n_resamples),
            "seed": int(seed),
            "crosstalk_assumed": crosstalk_assumed,
        }
        provenance = {
            "config_hash": config.config_hash() if config is not None else config_hash(settings),
            "seed": int(seed),
            "tool_version": TOOL_VERSION,
            "tool": TOOL_NAME,
            "counts_sha256": settings["counts_sha256"],
        }
        document = ReportDocument(report, provenance)
        document.save(os.path.join(out_dir, REPORT_FILE))
        document.plot_frame().to_csv(os.path.join(out_dir, PLOT_FILE), index=False,
                                     lineterminator="\n", na_rep="nan")
        log_message(f"Certified {len(report.rows)} dimensions; report in {out_dir}")
        return document

    def run_compile(self, mode, dim=None, pair=None, n=None, alpha=None, beta=None,
                    analyzer_angle=MUB_ANALYZER_ANGLE_DEG, phase_profile=None, out_dir=None):
        """
        Compile subspace settings (one pair, or every pair when pair is None) or a MUB network,
        write the artifacts and the verification report
        Raises:
            VerificationError: when any compiled artifact fails its simulation check
        """
        out_dir = self._target(out_dir)
        if mode == "subspace":
            result = self._compile_subspace(dim, pair, alpha, beta, out_dir)
        elif mode == "mub":
            result = self._compile_mub(n, analyzer_angle, phase_profile, out_dir)
        else:
            raise ValidationError(f"unknown compile mode {mode!r}, expected 'subspace' or 'mub'")

        verification = result["verification"]
        _write_json(verification, os.path.join(out_dir, VERIFICATION_FILE))
        if not verification["passed"]:
            log_message(f"Compilation failed verification ({mode})", "ERROR")
            raise VerificationError(f"{mode} compilation failed verification", verification)
        return result

    def _compile_subspace(self, dim, pair, alpha, beta, out_dir):
        if dim is None or not is_power_of_two(dim) or dim < 2:
            raise InvalidDimensionError(f"subspace compilation needs dim a power of 2, got {dim}")
        if pair is None:
            pairs = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
        else:
            pairs = [tuple(pair)]
        settings = [network_compiler.compile_subspace(i, j, dim, alpha, beta) for i, j in pairs]
        verification = summarize_verification(dim, [network_compiler.verify(s) for s in settings])

        with open(os.path.join(out_dir, SETTINGS_TEXT_FILE), "w", encoding="utf-8") as f:
            f.write(render_table(settings) + "\n")
        _write_json([s.to_dict() for s in settings], os.path.join(out_dir, SETTINGS_JSON_FILE))
        return {"settings": settings, "verification": verification}

    def _compile_mub(self, n, analyzer_angle, phase_profile, out_dir):
        network, verification = network_compiler.compile_mub(n, phase_profile, analyzer_angle)
        _write_json(network.to_dict(), os.path.join(out_dir, NETWORK_JSON_FILE))
        return {"network": network, "verification": verification}

# Create global pipeline runner instance
pipeline_runner = PipelineRunner()

def run_simulate(config, out_dir=None):
    return pipeline_runner.run_simulate(config, out_dir)

def run_certify(counts_path, dims=None, n_resamples=DEFAULT_RESAMPLES, seed=DEFAULT_SEED,
                crosstalk_assumed=CROSSTALK_ASSUMED, out_dir=None, config=None):
    return pipeline_runner.run_certify(counts_path, dims, n_resamples, seed, crosstalk_assumed, out_dir, config)

def run_compile(mode, dim=None, pair=None, n=None, out_dir=None, **kwargs):
    return pipeline_runner.run_compile(mode, dim=dim, pair=pair, n=n, out_dir=out_dir, **kwargs)

# -----------------------
# PRESENTATION
# -----------------------

def _fmt(value, digits=4):
    return "nan" if value is None or not np.isfinite(value) else f"{value:.{digits}f}"

def certification_table(document):
    """rich table of a report: one row per dimension"""
    table = Table(title="Entanglement certification", box=box.SIMPLE_HEAVY, header_style="bold")
    for name in ("d", "F", "±F", "F_sep", "k ≥", "EoF ≥", "±EoF"):
        table.add_column(name, justify="right")
    for row in document.report.rows:
        table.add_row(
            str(row.d), _fmt(row.fidelity), _fmt(row.fidelity_std), _fmt(separability_threshold(row.d)),
            str(row.schmidt), _fmt(row.eof, 3), _fmt(row.eof_std, 3),
        )
    return table

def settings_table(settings):
    names = column_names(settings[0].n) if settings else []
    table = Table(title="Subspace settings", box=box.SIMPLE_HEAVY, header_style="bold")
    table.add_column("Subspace", style="bold cyan")
    for name in names:
        table.add_column(name, justify="center")
    for s in settings:
        table.add_row(f"({s.pair[0]},{s.pair[1]})", *[s.roles[name] for name in names])
    return table

def verification_table(verification):
    table = Table(title="Verification", box=box.SIMPLE_HEAVY, header_style="bold")
    table.add_column("Check")
    table.add_column("Value", justify="right")
    for key in sorted(verification):
        if key == "failures":
            continue
        table.add_row(key, str(verification[key]))
    return table

def plot_report(document, path):
    """Fidelity, separable bound, Schmidt witness k/d and EoF bound versus d"""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frame = document.plot_frame()
    fig, (ax_f, ax_e) = plt.subplots(1, 2, figsize=(10, 4))
    ax_f.errorbar(frame["d"], frame["F"], yerr=[r.fidelity_std for r in document.report.rows],
                  fmt="o-", label="F")
    ax_f.plot(frame["d"], frame["F_sep"], "--", label="F_sep = 1/d")
    ax_f.plot(frame["d"], frame["k_witness"] / frame["d"], ":", label="k/d")
    ax_f.set_xlabel("d")
    ax_f.set_ylabel("Fidelity")
    ax_f.legend()

    ax_e.errorbar(frame["d"], frame["eof"], yerr=[r.eof_std for r in document.report.rows],
                  fmt="s-", color="purple", label="EoF bound")
    ax_e.plot(frame["d"], np.log2(frame["d"]), "--", color="grey", label="log2 d")
    ax_e.set_xlabel("d")
    ax_e.set_ylabel("e-bits")
    ax_e.legend()

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    log_message(f"Report figure saved to {path}")
    return path
