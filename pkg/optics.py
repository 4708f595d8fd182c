# optics.py - Jones-calculus simulation and compilation of path/polarization optical networks

from dataclasses import dataclass, field, replace
import math

import numpy as np
import pandas as pd

from utils import (
    log_message, log2_int, is_power_of_two,
    InvalidDimensionError, InvalidParameterError, InvalidPairError,
    DegenerateInputError, DimensionMismatchError, LayoutError, ValidationError,
)
from qstate import Basis, product_mub_basis, computational_basis
from config import *

POLS = ("H", "V")
H, V = 0, 1

SSM_ROLE = "SSM"
ROUTING_ROLES = ("SSM", "HWP@0°", "θ2@0°", "θ2@90°", "θ3@0°", "θ3@90°", "HWP@45°")

# Beam-displacer offsets of the source array, in lattice units (pitch 2)
SOURCE_OFFSETS = ((0, 2), (0, 4), (0, 8), (2, 0), (4, 0))

# -----------------------
# JONES MATRICES AND MODES
# -----------------------

def _port(p):
    return (int(p[0]), int(p[1]))

def _cos_sin_2theta(theta):
    two = 2.0 * float(theta)
    quarter = two / 90.0
    if quarter.is_integer():
        return ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))[int(quarter) % 4]
    rad = math.radians(two)
    return math.cos(rad), math.sin(rad)

def hwp_jones(theta):
    """
    Half-wave plate at angle theta (degrees) in the (H, V) basis
    Returns:
        np.ndarray: [[cos 2t, sin 2t], [sin 2t, -cos 2t]]
    """
    c, s = _cos_sin_2theta(theta)
    return np.array([[c, s], [s, -c]], dtype=complex)

def _check_angle(theta):
    if not 0.0 <= float(theta) < 180.0:
        raise InvalidParameterError(f"wave-plate angle must lie in [0, 180), got {theta}")
    return float(theta)


class ModeState:
    """Sparse amplitudes over (lattice port, polarization) modes"""

    def __init__(self, amplitudes=None):
        self.amplitudes = {}
        for (port, pol), amp in (amplitudes or {}).items():
            if pol not in POLS:
                raise ValidationError(f"polarization must be H or V, got {pol!r}")
            self.amplitudes[(_port(port), pol)] = complex(amp)
        if self.norm() > 1.0 + NORM_TOL:
            raise ValidationError(f"mode state norm {self.norm():.6g} exceeds 1")

    @classmethod
    def single(cls, port, pol="H"):
        return cls({(port, pol): 1.0})

    @classmethod
    def from_fields(cls, fields, column=0):
        amplitudes = {}
        for port, vec in fields.items():
            for k, pol in enumerate(POLS):
                if vec[k, column] != 0:
                    amplitudes[(port, pol)] = vec[k, column]
        return cls(amplitudes)

    def to_fields(self):
        fields = {}
        for (port, pol), amp in self.amplitudes.items():
            fields.setdefault(port, np.zeros((2, 1), dtype=complex))[POLS.index(pol), 0] += amp
        return fields

    def amplitude(self, port, pol="H"):
        return self.amplitudes.get((_port(port), pol), 0.0)

    def intensity(self, port):
        port = _port(port)
        return sum(abs(self.amplitude(port, pol)) ** 2 for pol in POLS)

    def ports(self):
        return sorted({port for port, _ in self.amplitudes})

    def norm(self):
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

# -----------------------
# ELEMENTS
# -----------------------

def _ports_to_json(ports):
    return None if ports is None else [list(p) for p in sorted(ports)]

def _ports_from_json(ports):
    return None if ports is None else tuple(_port(p) for p in ports)


@dataclass(frozen=True)
class HWP:
    """Half-wave plate on a set of ports (None = every port)"""
    theta: float
    ports: tuple = None
    label: str = ""
    kind = "HWP"

    def __post_init__(self):
        object.__setattr__(self, "theta", _check_angle(self.theta))
        if self.ports is not None:
            object.__setattr__(self, "ports", frozenset(_port(p) for p in self.ports))

    def apply(self, fields):
        jones = hwp_jones(self.theta)
        return {
            p: (jones @ vec if self.ports is None or p in self.ports else vec)
            for p, vec in fields.items()
        }

    def to_dict(self):
        return {"kind": self.kind, "label": self.label, "params": {"theta": self.theta},
                "ports": _ports_to_json(self.ports)}

    @classmethod
    def from_dict(cls, data):
        return cls(data["params"]["theta"], _ports_from_json(data.get("ports")), data.get("label", ""))


@dataclass(frozen=True)
class HWPArray:
    """Individually set wave plates; unlisted ports pass unchanged"""
    angles: dict = field(default_factory=dict)
    label: str = ""
    kind = "HWPArray"

    def __post_init__(self):
        object.__setattr__(self, "angles", {_port(p): _check_angle(t) for p, t in self.angles.items()})

    def apply(self, fields):
        return {
            p: (hwp_jones(self.angles[p]) @ vec if p in self.angles else vec)
            for p, vec in fields.items()
        }

    def to_dict(self):
        ports = sorted(self.angles)
        return {"kind": self.kind, "label": self.label,
                "params": {"angles": [self.angles[p] for p in ports]}, "ports": _ports_to_json(ports)}

    @classmethod
    def from_dict(cls, data):
        ports = _ports_from_json(data["ports"]) or ()
        return cls(dict(zip(ports, data["params"]["angles"])), data.get("label", ""))


@dataclass(frozen=True)
class BD:
    """Beam displacer: V is shifted by `offset`, H passes straight"""
    offset: tuple
    label: str = ""
    kind = "BD"

    def __post_init__(self):
        offset = _port(self.offset)
        if offset == (0, 0):
            raise InvalidParameterError("beam-displacer offset must be nonzero")
        object.__setattr__(self, "offset", offset)

    def apply(self, fields):
        out = {}
        dr, dc = self.offset
        for (r, c), vec in fields.items():
            out.setdefault((r, c), np.zeros_like(vec))[H] += vec[H]
            out.setdefault((r + dr, c + dc), np.zeros_like(vec))[V] += vec[V]
        return out

    def to_dict(self):
        return {"kind": self.kind, "label": self.label, "params": {"offset": list(self.offset)}, "ports": None}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["params"]["offset"]), data.get("label", ""))


@dataclass(frozen=True)
class PBS:
    """Polarizing beam splitter: V at a mapped port is reflected to its partner, H transmitted"""
    mapping: dict
    label: str = ""
    kind = "PBS"

    def __post_init__(self):
        object.__setattr__(self, "mapping", {_port(s): _port(t) for s, t in self.mapping.items()})

    def apply(self, fields):
        out = {}
        v_source = {}
        for port, vec in fields.items():
            out.setdefault(port, np.zeros_like(vec))[H] += vec[H]
            target = self.mapping.get(port, port)
            if np.any(vec[V] != 0):
                if target in v_source:
                    raise LayoutError(
                        f"{self.label or 'PBS'} merges V light from {v_source[target]} and {port} into {target}"
                    )
                v_source[target] = port
            out.setdefault(target, np.zeros_like(vec))[V] += vec[V]
        return out

    def to_dict(self):
        sources = sorted(self.mapping)
        return {"kind": self.kind, "label": self.label,
                "params": {"targets": [list(self.mapping[s]) for s in sources]},
                "ports": _ports_to_json(sources)}

    @classmethod
    def from_dict(cls, data):
        sources = _ports_from_json(data["ports"]) or ()
        return cls(dict(zip(sources, map(_port, data["params"]["targets"]))), data.get("label", ""))


@dataclass(frozen=True)
class SLMPhase:
    """Spatial light modulator pixel phases, acting on V only"""
    phases: dict
    label: str = ""
    kind = "SLMPhase"

    def __post_init__(self):
        object.__setattr__(self, "phases", {_port(p): float(phi) for p, phi in self.phases.items()})

    def apply(self, fields):
        out = {}
        for port, vec in fields.items():
            if port in self.phases:
                vec = vec.copy()
                vec[V] *= np.exp(1j * self.phases[port])
            out[port] = vec
        return out

    def to_dict(self):
        ports = sorted(self.phases)
        return {"kind": self.kind, "label": self.label,
                "params": {"phases": [self.phases[p] for p in ports]}, "ports": _ports_to_json(ports)}

    @classmethod
    def from_dict(cls, data):
        ports = _ports_from_json(data["ports"]) or ()
        return cls(dict(zip(ports, data["params"]["phases"])), data.get("label", ""))


@dataclass(frozen=True)
class PostSelectH:
    """Keep only horizontally polarized light (transmitted arm of a PBS)"""
    ports: tuple = None
    label: str = ""
    kind = "PostSelectH"

    def __post_init__(self):
        if self.ports is not None:
            object.__setattr__(self, "ports", frozenset(_port(p) for p in self.ports))

    def apply(self, fields):
        out = {}
        for port, vec in fields.items():
            if self.ports is None or port in self.ports:
                vec = vec.copy()
                vec[V] = 0.0
            out[port] = vec
        return out

    def to_dict(self):
        return {"kind": self.kind, "label": self.label, "params": {}, "ports": _ports_to_json(self.ports)}

    @classmethod
    def from_dict(cls, data):
        return cls(_ports_from_json(data.get("ports")), data.get("label", ""))


ELEMENT_KINDS = {cls.kind: cls for cls in (HWP, HWPArray, BD, PBS, SLMPhase, PostSelectH)}

# -----------------------
# NETWORK
# -----------------------

@dataclass(frozen=True, eq=False)
class Network:
    """
    Ordered optical elements acting on lattice ports
    Args:
        elements: element sequence, applied left to right
        input_ports: ports light may enter on
        output_ports: ports light may leave on (None = not enforced)
        input_pols / output_pols: polarizations spanned by the transfer matrix
        loss: uniform amplitude loss per element, in [0, 1)
    """
    elements: tuple
    input_ports: tuple
    output_ports: tuple = None
    input_pols: tuple = ("H",)
    output_pols: tuple = ("H", "V")
    loss: float = 0.0
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "input_ports", tuple(_port(p) for p in self.input_ports))
        if self.output_ports is not None:
            object.__setattr__(self, "output_ports", tuple(_port(p) for p in self.output_ports))
        if not 0.0 <= self.loss < 1.0:
            raise InvalidParameterError(f"per-element loss must lie in [0, 1), got {self.loss}")

    @property
    def lossless(self):
        return self.loss == 0.0 and not any(isinstance(e, PostSelectH) for e in self.elements)

    def input_modes(self):
        return [(p, pol) for p in self.input_ports for pol in self.input_pols]

    def output_modes(self):
        if self.output_ports is None:
            return None
        return [(p, pol) for p in self.output_ports for pol in self.output_pols]

    def _check_outputs(self, fields):
        if self.output_ports is None:
            return
        allowed = set(self.output_ports)
        for port, vec in fields.items():
            if port not in allowed and np.any(np.abs(vec) > LEAKAGE_TOL):
                raise LayoutError(f"network {self.name!r} sends light to undeclared port {port}")

    def trace(self, fields):
        """Yield (element, fields) after every element"""
        scale = 1.0 - self.loss
        for element in self.elements:
            fields = element.apply(fields)
            if scale != 1.0:
                fields = {p: scale * vec for p, vec in fields.items()}
            yield element, fields

    def run(self, fields):
        for _, fields in self.trace(fields):
            pass
        self._check_outputs(fields)
        return fields

    def input_fields(self, amplitudes):
        """Batch of inputs given as columns over input_modes(), as port -> (2, B) arrays"""
        modes = self.input_modes()
        amplitudes = np.asarray(amplitudes, dtype=complex)
        if amplitudes.ndim == 1:
            amplitudes = amplitudes[:, None]
        if amplitudes.shape[0] != len(modes):
            raise DimensionMismatchError(f"{amplitudes.shape[0]} rows for {len(modes)} input modes")
        fields = {}
        for row, (port, pol) in zip(amplitudes, modes):
            fields.setdefault(port, np.zeros((2, amplitudes.shape[1]), dtype=complex))[POLS.index(pol)] += row
        return fields

    def propagate(self, amplitudes):
        """
        Propagate a batch of inputs given as columns over input_modes()
        Args:
            amplitudes (array-like): shape (len(input_modes), B)
        Returns:
            dict: port -> (2, B) complex array
        """
        return self.run(self.input_fields(amplitudes))

    def simulate(self, state):
        """Apply every element in order to a ModeState"""
        allowed = set(self.input_ports)
        stray = [port for port in state.ports() if port not in allowed]
        if stray:
            raise LayoutError(f"input light on undeclared ports {stray}")
        fields = self.run(state.to_fields())
        return ModeState.from_fields(fields)

    def to_dict(self):
        return {
            "name": self.name,
            "input_ports": [list(p) for p in self.input_ports],
            "output_ports": None if self.output_ports is None else [list(p) for p in self.output_ports],
            "input_pols": list(self.input_pols),
            "output_pols": list(self.output_pols),
            "loss": self.loss,
            "elements": [e.to_dict() for e in self.elements],
        }

    @classmethod
    def from_dict(cls, data):
        elements = []
        for item in data["elements"]:
            if item["kind"] not in ELEMENT_KINDS:
                raise ValidationError(f"unknown element kind {item['kind']!r}")
            elements.append(ELEMENT_KINDS[item["kind"]].from_dict(item))
        outputs = data.get("output_ports")
        return cls(
            tuple(elements),
            tuple(_port(p) for p in data["input_ports"]),
            None if outputs is None else tuple(_port(p) for p in outputs),
            tuple(data.get("input_pols", ("H",))),
            tuple(data.get("output_pols", ("H", "V"))),
            float(data.get("loss", 0.0)),
            data.get("name", ""),
        )


def simulate(network, state):
    return network.simulate(state)

def transfer_matrix(network, outputs=None):
    """
    Amplitude matrix T[out, in] over the network's input modes
    Args:
        network (Network): network to extract
        outputs (list): (port, pol) output modes; defaults to the declared ones,
            or to every mode that receives light
    Returns:
        tuple: (T, output modes)
    """
    n_in = len(network.input_modes())
    fields = network.propagate(np.eye(n_in, dtype=complex))
    if outputs is None:
        outputs = network.output_modes()
    if outputs is None:
        outputs = sorted(
            (port, pol) for port, vec in fields.items() for k, pol in enumerate(POLS)
            if np.any(np.abs(vec[k]) > LEAKAGE_TOL)
        )
    matrix = np.zeros((len(outputs), n_in), dtype=complex)
    for row, (port, pol) in enumerate(outputs):
        if port in fields:
            matrix[row] = fields[port][POLS.index(pol)]
    return matrix, list(outputs)

def is_lossless_unitary(network, tol=UNITARY_TOL):
    """T^dagger T = identity on the input modes"""
    matrix, _ = transfer_matrix(network)
    gram = matrix.conj().T @ matrix
    return bool(np.max(np.abs(gram - np.eye(gram.shape[0]))) <= tol)

def realized_basis(network):
    """Basis measured by the output ports: row k = conj(T[k, :])"""
    matrix, _ = transfer_matrix(network)
    return Basis(matrix.shape[1], matrix.conj(), network.name or "realized")

# -----------------------
# SOURCE ARRAY AND INTENSITY REGULATOR
# -----------------------

def build_source_array(d=32, loss=0.0):
    """
    HWP at 22.5 deg followed by a beam-displacer cascade that splits one beam
    into d beams of equal intensity on a lattice of pitch 2
    Args:
        d (int): number of beams, a power of 2 up to 32
    Returns:
        Network: one input port (0, 0), d output ports in H
    """
    if not is_power_of_two(d) or not 2 <= d <= 2 ** len(SOURCE_OFFSETS):
        raise InvalidDimensionError(f"source array supports d = 2..{2 ** len(SOURCE_OFFSETS)} (powers of 2), got {d}")
    elements = []
    ports = {(0, 0)}
    shifted = set()
    for k, (dr, dc) in enumerate(SOURCE_OFFSETS[:log2_int(d)]):
        elements.append(HWP(SOURCE_SPLIT_ANGLE_DEG, label=f"HWP{k + 1}"))
        elements.append(BD((dr, dc), label=f"BD{k + 1}"))
        shifted = {(r + dr, c + dc) for r, c in ports}
        ports |= shifted
    elements.append(HWPArray({p: 45.0 for p in shifted}, label="HWPA0"))

    outputs = tuple(sorted(ports))
    log_message(f"Built source array for d={d} on {len(outputs)} ports", "DEBUG")
    return Network(tuple(elements), ((0, 0),), outputs, ("H",), ("H",), loss, f"source array d={d}")

def source_intensities(network):
    out = network.simulate(ModeState.single((0, 0), "H"))
    return {port: out.intensity(port) for port in network.output_ports}

def beam_positions_mm(network):
    """Lattice ports of the output beams converted to millimetres"""
    return {port: (port[0] * LATTICE_UNIT_MM, port[1] * LATTICE_UNIT_MM) for port in network.output_ports}

def intensity_regulator_transmission(phi):
    """|1 - e^{i phi}|^2 / 4 = sin^2(phi / 2)"""
    return float(math.sin(phi / 2.0) ** 2)

def intensity_regulator_network(phi, port=(0, 0)):
    """HWP(22.5) - SLM(phi on V) - HWP(22.5) - HWP(45) - transmitted H arm"""
    port = _port(port)
    elements = (
        HWP(22.5, (port,), "HWP1"),
        SLMPhase({port: phi}, "SLM"),
        HWP(22.5, (port,), "HWP2"),
        HWP(45.0, (port,), "HWP3"),
        PostSelectH((port,), "PBS"),
    )
    return Network(elements, (port,), (port,), ("H",), ("H",), 0.0, "intensity regulator")

def regulator_phase_for(transmission):
    """SLM phase in [0, pi] giving the requested transmission"""
    if not 0.0 <= transmission <= 1.0:
        raise InvalidParameterError(f"transmission must lie in [0, 1], got {transmission}")
    return 2.0 * math.asin(math.sqrt(transmission))

# -----------------------
# TWO-DIMENSIONAL SUBSPACE SETTINGS
# -----------------------

def column_names(n):
    """Wave-plate columns after each beam displacer: HWPA2..HWPA(n), then the whole plate HWP1"""
    return [f"HWPA{c + 2}" for c in range(n - 1)] + ["HWP1"]

def _block_port(t, c):
    """Lattice port of path t after beam displacer c"""
    return (0, t & ~((2 << c) - 1))

def _routing_role(flip_i, flip_j):
    (fi, to_v_i), (fj, to_v_j) = flip_i, flip_j
    if fi and fj:
        return "HWP@45°"
    if fj:
        return "θ2@0°" if to_v_j else "θ3@0°"
    if fi:
        return "θ2@90°" if to_v_i else "θ3@90°"
    return "HWP@0°"

def _normalize_projector(alpha, beta):
    alpha, beta = complex(alpha), complex(beta)
    norm = math.sqrt(abs(alpha) ** 2 + abs(beta) ** 2)
    if norm == 0.0:
        raise DegenerateInputError("projector amplitudes are both zero")
    return alpha / norm, beta / norm

def projector_amplitudes(basis, sign=1):
    """(alpha, beta) of the X or Y eigenvector (|i> + s|j>)/sqrt2, (|i> + s i|j>)/sqrt2"""
    if basis not in ("X", "Y"):
        raise ValidationError(f"subspace projectors are X or Y, got {basis!r}")
    r = 1.0 / math.sqrt(2.0)
    return r, sign * (r if basis == "X" else 1j * r)


@dataclass(frozen=True)
class SubspaceSetting:
    """Wave-plate configuration that routes paths i and j onto one port for analysis"""
    pair: tuple
    d: int
    roles: dict
    prep_angles: dict
    columns: tuple
    ssm_stage: int
    ssm_port: tuple
    detect_port: tuple
    ssm_angle: float = 0.0
    ssm_phase: float = 0.0
    alpha: complex = 1 / math.sqrt(2.0)
    beta: complex = 1 / math.sqrt(2.0)

    def __post_init__(self):
        n_ssm = sum(1 for role in self.roles.values() if role == SSM_ROLE)
        if n_ssm != 1:
            raise ValidationError(f"setting {self.pair} has {n_ssm} SSM stages, expected exactly one")
        unknown = [role for role in self.roles.values() if role not in ROUTING_ROLES]
        if unknown:
            raise ValidationError(f"unknown routing roles {unknown}")

    @property
    def n(self):
        return log2_int(self.d)

    @property
    def output_pol(self):
        return "H" if self.ssm_stage == self.n - 1 else "V"

    def to_dict(self):
        return {
            "pair": list(self.pair),
            "d": self.d,
            "roles": dict(self.roles),
            "ssm_stage": self.ssm_stage,
            "ssm_port": list(self.ssm_port),
            "detect_port": list(self.detect_port),
            "ssm_angle_deg": self.ssm_angle,
            "ssm_phase_rad": self.ssm_phase,
            "projector": {"alpha": [self.alpha.real, self.alpha.imag],
                          "beta": [self.beta.real, self.beta.imag]},
            "columns": [
                [[p[0], p[1], angle] for p, angle in sorted(column.items())] for column in self.columns
            ],
        }


def subspace_network(setting, prefix_only=False):
    """
    Wave-plate/beam-displacer network of a subspace setting
    prefix_only stops right after the beam displacer that merges i and j
    """
    n, m, q = setting.n, setting.ssm_stage, setting.ssm_port
    names = column_names(n)
    elements = [HWPArray(setting.prep_angles, "HWPA1")]
    for c in range(n):
        elements.append(BD((0, -(1 << c)), f"BD{c + 1}"))
        if c == m:
            if prefix_only:
                break
            elements.append(SLMPhase({q: setting.ssm_phase}, "SLM"))
            elements.append(HWP(setting.ssm_angle, (q,), names[c]))
        elif c == n - 1:
            elements.append(HWP(45.0, None, names[c]))
        else:
            elements.append(HWPArray(setting.columns[c], names[c]))
    if not prefix_only:
        elements.append(PostSelectH(None, "PBS"))
    i, j = setting.pair
    inputs = tuple((0, k) for k in range(setting.d))
    return Network(tuple(elements), inputs, None, ("H",), ("H", "V"), 0.0, f"subspace ({i},{j})")

def _route(i, j, d):
    n = log2_int(d)
    m = (i ^ j).bit_length() - 1
    names = column_names(n)
    q = _block_port(i, m)
    columns, roles = [], {}
    for c in range(n):
        if c < m:
            angles, flips = {}, []
            for t in (i, j):
                current, wanted = (t >> c) & 1, (t >> (c + 1)) & 1
                angles[_block_port(t, c)] = 45.0 if current != wanted else 0.0
                flips.append((current != wanted, wanted == 1))
            roles[names[c]] = _routing_role(*flips)
            columns.append(angles)
        elif c == m:
            roles[names[c]] = SSM_ROLE
            columns.append({})
        elif c < n - 1:
            port = (0, q[1] - sum(1 << k for k in range(m + 1, c + 1)))
            roles[names[c]] = "HWP@0°"
            columns.append({port: 0.0})
        else:
            roles[names[c]] = "HWP@45°"
            columns.append({})
    detect = (0, q[1] - sum(1 << k for k in range(m + 1, n)))
    return m, q, detect, roles, tuple(columns)

def configure_projector(setting, alpha, beta):
    """
    Set the SSM phase and wave-plate angle so the detected mode projects onto alpha|i> + beta|j>
    Args:
        setting (SubspaceSetting): routed setting
        alpha, beta (complex): projector amplitudes (normalized here)
    Returns:
        SubspaceSetting
    """
    alpha, beta = _normalize_projector(alpha, beta)
    i, j = setting.pair
    fields = subspace_network(setting, prefix_only=True).propagate(np.eye(setting.d, dtype=complex))
    vec = fields.get(setting.ssm_port)
    c_i = vec[H, i] if vec is not None else 0.0
    c_j = vec[V, j] if vec is not None else 0.0
    if abs(c_i) < 0.5 or abs(c_j) < 0.5:
        raise LayoutError(f"paths {i} and {j} do not meet at SSM port {setting.ssm_port}")

    phase = np.angle(alpha) - np.angle(beta) + np.angle(c_i) - np.angle(c_j)
    if setting.output_pol == "H":
        two_theta = math.atan2(abs(beta), abs(alpha))
    else:
        two_theta = math.atan2(abs(alpha), abs(beta))
        phase -= math.pi
    return replace(setting, ssm_angle=math.degrees(two_theta) / 2.0,
                   ssm_phase=float(np.mod(phase, 2.0 * math.pi)), alpha=alpha, beta=beta)

def compile_subspace(i, j, d, alpha=None, beta=None):
    """
    Route paths i and j onto one port with orthogonal polarizations and set the
    SSM to analyze alpha|i> + beta|j> (default: the X+ projector)
    Stage c merges address bit c; the SSM sits at the most significant bit where i and j differ
    """
    if not is_power_of_two(d) or d < 2:
        raise InvalidDimensionError(f"subspace network needs d a power of 2, got {d}")
    if not (0 <= i < j < d):
        raise InvalidPairError(f"pair ({i},{j}) invalid for d={d}")
    m, q, detect, roles, columns = _route(i, j, d)
    prep = {(0, k): 45.0 for k in range(d) if k & 1}
    setting = SubspaceSetting((i, j), d, roles, prep, columns, m, q, detect)
    if alpha is None and beta is None:
        alpha, beta = projector_amplitudes("X", 1)
    return configure_projector(setting, alpha or 0.0, beta or 0.0)

def _routing_failures(setting, network):
    """Walk the prefix and name the column after which a target leaves its expected port"""
    i, j = setting.pair
    m = setting.ssm_stage
    names = ["HWPA1"] + column_names(setting.n)
    stage = -1
    for element, fields in network.trace(network.input_fields(np.eye(setting.d)[:, [i, j]])):
        if not isinstance(element, BD):
            continue
        stage += 1
        for col, t in enumerate((i, j)):
            port = setting.ssm_port if stage == m else _block_port(t, stage)
            vec = fields.get(port)
            intensity = 0.0 if vec is None else float(np.sum(np.abs(vec[:, col]) ** 2))
            if intensity < 1.0 - PROJECTOR_TOL:
                return [f"routing: path {t} leaves port {port} after {names[stage]}"]
    return [f"routing: paths {i},{j} reach {setting.ssm_port} in the wrong polarizations after {names[m]}"]

def verify_subspace_setting(setting, d=None, alpha=None, beta=None, n_random=4, seed=DEFAULT_SEED):
    """
    Simulation check of a compiled setting
    (a) after the merging displacer, i sits in (ssm_port, H) and j in (ssm_port, V)
    (b) no other path leaks into the SSM port or the detected mode
    (c) detection probabilities equal |<phi|psi>|^2 for basis and random inputs
    Returns:
        dict: verification report with `passed` and a list of failures
    """
    if d is not None and int(d) != setting.d:
        raise DimensionMismatchError(f"setting compiled for d={setting.d}, verified at d={d}")
    if alpha is not None or beta is not None:
        setting = configure_projector(setting, 1.0 if alpha is None else alpha, 0.0 if beta is None else beta)
    i, j = setting.pair
    d = setting.d
    others = [k for k in range(d) if k not in (i, j)]
    failures = []

    prefix = subspace_network(setting, prefix_only=True)
    fields = prefix.propagate(np.eye(d, dtype=complex))
    at_q = fields.get(setting.ssm_port, np.zeros((2, d), dtype=complex))
    if abs(abs(at_q[H, i]) - 1.0) > PROJECTOR_TOL or abs(abs(at_q[V, j]) - 1.0) > PROJECTOR_TOL:
        failures += _routing_failures(setting, prefix)
    leak_q = float(np.max(np.sum(np.abs(at_q[:, others]) ** 2, axis=0))) if others else 0.0

    rng = np.random.default_rng(seed)
    states = rng.normal(size=(d, n_random)) + 1j * rng.normal(size=(d, n_random))
    states /= np.linalg.norm(states, axis=0)
    inputs = np.hstack([np.eye(d, dtype=complex), states])
    out = subspace_network(setting).propagate(inputs)
    detected = out.get(setting.detect_port, np.zeros((2, inputs.shape[1]), dtype=complex))[H]
    probs = np.abs(detected) ** 2
    leak_detect = float(np.max(probs[others])) if others else 0.0
    expected = np.abs(np.conj(setting.alpha) * inputs[i] + np.conj(setting.beta) * inputs[j]) ** 2
    prob_error = float(np.max(np.abs(probs - expected)))

    leakage = max(leak_q, leak_detect)
    if leakage >= LEAKAGE_TOL:
        failures.append(f"leakage: other paths reach the analysis port (max {leakage:.3g})")
    if prob_error > PROBABILITY_TOL:
        failures.append(f"projector: detection probabilities deviate by {prob_error:.3g}")

    report = {
        "pair": [i, j],
        "d": d,
        "ssm_stage": column_names(setting.n)[setting.ssm_stage],
        "passed": not failures,
        "failures": failures,
        "max_leakage": leakage,
        "max_probability_error": prob_error,
    }
    if failures:
        log_message(f"Subspace ({i},{j}) failed verification: {failures}", "ERROR")
    return report

def summarize_verification(d, reports):
    """Fold per-pair verification reports into one verdict"""
    failed = [r for r in reports if not r["passed"]]
    log_message(f"Verified {len(reports)} subspace settings at d={d}: {len(failed)} failed")
    return {
        "d": d,
        "n_pairs": len(reports),
        "n_passed": len(reports) - len(failed),
        "passed": not failed,
        "max_leakage": max(r["max_leakage"] for r in reports),
        "max_probability_error": max(r["max_probability_error"] for r in reports),
        "failures": failed,
    }

def verify_all_subspaces(d, alpha=None, beta=None):
    """Compile and verify every pair i < j; returns a summary with the failing reports"""
    reports = [
        verify_subspace_setting(compile_subspace(i, j, d, alpha, beta))
        for i in range(d) for j in range(i + 1, d)
    ]
    return summarize_verification(d, reports)

def render_table(settings):
    """Plain-text table of routing roles, one row per pair"""
    if not settings:
        return ""
    names = column_names(settings[0].n)
    rows = [{"Subspace": f"({s.pair[0]},{s.pair[1]})", **{name: s.roles[name] for name in names}}
            for s in settings]
    return pd.DataFrame(rows, columns=["Subspace", *names]).to_string(index=False)

# -----------------------
# MUB NETWORKS
# -----------------------

def compile_mub_network(n, phase_profile=None, analyzer_angle=MUB_ANALYZER_ANGLE_DEG, loss=0.0):
    """
    Cascade of n merge stages realizing a product-MUB (or, with analyzer_angle=0,
    computational) measurement over d = 2^n paths
    Stage s: HWPA flips bit-s ports to V, BD merges them onto their partners,
    the analyzer HWP mixes the pair, the PBS splits it back and the HWPA restores H
    Args:
        n (int): number of qubits, 1..6
        phase_profile (array-like): optional SLM phases per path applied before the cascade
        analyzer_angle (float): stage HWP angle in degrees
    Returns:
        Network: output port k projects onto product_mub_basis(n)[k]
    """
    if int(n) != n or not 1 <= n <= MAX_MUB_QUBITS:
        raise InvalidDimensionError(f"MUB network supports n = 1..{MAX_MUB_QUBITS}, got {n}")
    n = int(n)
    d = 1 << n
    ports = tuple((0, k) for k in range(d))
    elements = []

    if phase_profile is not None:
        phases = np.asarray(phase_profile, dtype=float).reshape(-1)
        if phases.size != d:
            raise DimensionMismatchError(f"phase profile has {phases.size} entries, need {d}")
        elements.append(HWP(45.0, None, "HWP-in"))
        elements.append(SLMPhase({p: phi for p, phi in zip(ports, phases)}, "SLM1"))
        elements.append(HWP(45.0, None, "HWP-out"))

    for s in range(n):
        step = 1 << s
        ones = [p for p in ports if (p[1] >> s) & 1]
        zeros = [p for p in ports if not (p[1] >> s) & 1]
        elements.append(HWPArray({p: 45.0 for p in ones}, f"HWPA{s + 1}"))
        elements.append(BD((0, -step), f"BD{s + 1}"))
        elements.append(HWP(analyzer_angle, zeros, f"HWP{s + 1}"))
        elements.append(PBS({p: (0, p[1] + step) for p in zeros}, f"PBS{s + 1}"))
        elements.append(HWPArray({p: 45.0 for p in ones}, f"HWPA{s + 1}-restore"))

    log_message(f"Built MUB network for n={n} ({len(elements)} elements)", "DEBUG")
    return Network(tuple(elements), ports, ports, ("H",), ("H",), loss, f"mub n={n}")

# -----------------------
# HANDLER
# -----------------------

class NetworkCompiler:
    def __init__(self, n_random=4, seed=DEFAULT_SEED):
        self.n_random = n_random
        self.seed = seed

    def compile_subspace(self, i, j, d, alpha=None, beta=None):
        setting = compile_subspace(i, j, d, alpha, beta)
        log_message(f"Compiled subspace ({i},{j}) at d={d}: SSM at {column_names(setting.n)[setting.ssm_stage]}",
                    "DEBUG")
        return setting

    def verify(self, setting):
        return verify_subspace_setting(setting, n_random=self.n_random, seed=self.seed)

    def compile_pairs(self, pairs, d, alpha=None, beta=None):
        """Compile and verify a list of pairs; returns (settings, reports)"""
        settings = [self.compile_subspace(i, j, d, alpha, beta) for i, j in pairs]
        reports = [self.verify(s) for s in settings]
        return settings, reports

    def compile_mub(self, n, phase_profile=None, analyzer_angle=MUB_ANALYZER_ANGLE_DEG):
        """Build the MUB network and check it against the product (or computational) basis"""
        if analyzer_angle not in (0.0, MUB_ANALYZER_ANGLE_DEG):
            raise InvalidParameterError(
                f"analyzer angle must be 0 or {MUB_ANALYZER_ANGLE_DEG} deg, got {analyzer_angle}"
            )
        network = compile_mub_network(n, phase_profile, analyzer_angle)
        realized = realized_basis(network)
        d = 1 << int(n)
        target = product_mub_basis(n) if analyzer_angle == MUB_ANALYZER_ANGLE_DEG else computational_basis(d)
        vectors = target.vectors
        if phase_profile is not None:
            phases = np.asarray(phase_profile, dtype=float).reshape(-1)
            vectors = vectors * np.exp(-1j * phases)[None, :]
        overlaps = np.abs(np.sum(vectors.conj() * realized.vectors, axis=1))
        deviation = float(np.max(np.abs(overlaps - 1.0)))
        report = {
            "n": int(n),
            "d": d,
            "unitary": is_lossless_unitary(network),
            "basis_deviation": deviation,
        }
        report["passed"] = bool(report["unitary"] and np.isfinite(deviation) and deviation <= UNITARY_TOL)
        return network, report

# Create global network compiler instance
network_compiler = NetworkCompiler()
