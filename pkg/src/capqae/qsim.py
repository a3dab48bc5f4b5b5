"""A small statevector simulator for amplitude-estimation circuits.

Qubit ordering is little-endian: qubit ``q`` is bit ``q`` of the basis-state
index, so ``|b_{n-1} ... b_1 b_0>`` has index ``sum_q b_q 2^q``.

The gate set is deliberately tiny: ``X`` and ``RY(theta)``, each optionally
controlled on any set of qubits with any pattern of required control values.
That covers distribution loading, the threshold comparator and the payoff
rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ContractViolation

__all__ = [
    "Gate",
    "Circuit",
    "StateVector",
    "AmplitudeOperator",
    "x",
    "ry",
    "mcx",
    "mcry",
    "apply_gate",
    "run_circuit",
    "probability_of_one",
    "grover_power",
    "sample_measurements",
]

NORM_TOL = 1e-10


@dataclass(frozen=True)
class Gate:
    """``kind`` is ``"x"`` or ``"ry"``.  ``ctrl_state[c]`` is the value required on ``controls[c]``."""

    kind: str
    target: int
    theta: float = 0.0
    controls: tuple = ()
    ctrl_state: tuple = None

    def __post_init__(self):
        if self.kind not in ("x", "ry"):
            raise ContractViolation(f"unsupported gate kind {self.kind!r}")
        controls = tuple(map(int, self.controls))
        state = (1,) * len(controls) if self.ctrl_state is None else tuple(map(int, self.ctrl_state))
        if len(state) != len(controls) or any(s not in (0, 1) for s in state):
            raise ContractViolation("ctrl_state must give a 0/1 value per control")
        if self.target in controls or len(set(controls)) != len(controls):
            raise ContractViolation("controls must be distinct and exclude the target")
        if self.target < 0 or any(c < 0 for c in controls):
            raise ContractViolation("qubit indices must be non-negative")
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "ctrl_state", state)

    @property
    def qubits(self):
        return (self.target,) + self.controls

    def inverse(self):
        if self.kind == "x":
            return self
        return Gate("ry", self.target, -self.theta, self.controls, self.ctrl_state)


def x(target):
    return Gate("x", target)


def ry(theta, target):
    return Gate("ry", target, float(theta))


def mcx(controls, target, ctrl_state=None):
    return Gate("x", target, 0.0, tuple(controls), ctrl_state)


def mcry(theta, controls, target, ctrl_state=None):
    return Gate("ry", target, float(theta), tuple(controls), ctrl_state)


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise ContractViolation("a circuit needs at least one qubit")
        for g in self.gates:
            self._check(g)

    def _check(self, gate):
        if max(gate.qubits) >= self.n_qubits:
            raise ContractViolation(
                f"gate on qubit {max(gate.qubits)} in a {self.n_qubits}-qubit circuit"
            )

    def append(self, gate):
        self._check(gate)
        self.gates.append(gate)
        return self

    def extend(self, gates):
        for g in gates:
            self.append(g)
        return self

    def compose(self, other):
        """Append ``other``'s gates; ``other`` may act on a prefix of the qubits."""
        if other.n_qubits > self.n_qubits:
            raise ContractViolation("cannot compose a wider circuit into a narrower one")
        return self.extend(other.gates)

    def inverse(self):
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def widened(self, n_qubits):
        return Circuit(n_qubits, list(self.gates))

    def __len__(self):
        return len(self.gates)


class StateVector:
    """``2^n`` complex amplitudes, unit norm."""

    __slots__ = ("amplitudes", "n_qubits")

    def __init__(self, amplitudes, n_qubits=None, check=True):
        amps = np.asarray(amplitudes, dtype=np.complex128)
        n = int(round(math.log2(amps.size))) if n_qubits is None else n_qubits
        if n < 1 or amps.shape != (1 << n,):
            raise ContractViolation(f"need 2^n amplitudes with n >= 1, got shape {amps.shape}")
        if check and abs(np.vdot(amps, amps).real - 1.0) > NORM_TOL:
            raise ContractViolation("state is not normalized")
        self.amplitudes = amps
        self.n_qubits = n

    @classmethod
    def zero(cls, n_qubits):
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps, n_qubits, check=False)

    def copy(self):
        return StateVector(self.amplitudes.copy(), self.n_qubits, check=False)

    @property
    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def norm(self):
        return math.sqrt(np.vdot(self.amplitudes, self.amplitudes).real)

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


@lru_cache(maxsize=4096)
def _pair_indices(n, target, controls, ctrl_state):
    idx = np.arange(1 << n, dtype=np.int64)
    mask = ((idx >> target) & 1) == 0
    for c, s in zip(controls, ctrl_state):
        mask &= ((idx >> c) & 1) == s
    i0 = idx[mask]
    i1 = i0 | (1 << target)
    i0.flags.writeable = False
    i1.flags.writeable = False
    return i0, i1


@lru_cache(maxsize=256)
def _one_mask(n, qubit):
    idx = np.arange(1 << n, dtype=np.int64)
    m = ((idx >> qubit) & 1) == 1
    m.flags.writeable = False
    return m


def _apply_inplace(amps, n, gate):
    i0, i1 = _pair_indices(n, gate.target, gate.controls, gate.ctrl_state)
    if gate.kind == "x":
        amps[i0], amps[i1] = amps[i1], amps[i0].copy()
    else:
        c = math.cos(gate.theta / 2.0)
        s = math.sin(gate.theta / 2.0)
        a0 = amps[i0]
        a1 = amps[i1]
        amps[i0] = c * a0 - s * a1
        amps[i1] = s * a0 + c * a1


def apply_gate(state, gate):
    """Return a new state with ``gate`` applied."""
    if max(gate.qubits) >= state.n_qubits:
        raise ContractViolation(
            f"gate on qubit {max(gate.qubits)} for a {state.n_qubits}-qubit state"
        )
    out = state.copy()
    _apply_inplace(out.amplitudes, out.n_qubits, gate)
    return out


def run_circuit(circuit, initial=None):
    """Apply ``circuit`` to ``initial`` (default ``|0...0>``) and return the result."""
    if initial is None:
        out = StateVector.zero(circuit.n_qubits)
    else:
        if initial.n_qubits != circuit.n_qubits:
            raise ContractViolation(
                f"{circuit.n_qubits}-qubit circuit on a {initial.n_qubits}-qubit state"
            )
        out = initial.copy()
    for g in circuit.gates:
        _apply_inplace(out.amplitudes, out.n_qubits, g)
    return out


def probability_of_one(state, qubit):
    """Probability that measuring ``qubit`` yields 1."""
    if not 0 <= qubit < state.n_qubits:
        raise ContractViolation(f"qubit {qubit} outside a {state.n_qubits}-qubit state")
    amps = state.amplitudes[_one_mask(state.n_qubits, qubit)]
    return float(min(1.0, np.vdot(amps, amps).real))


@dataclass
class AmplitudeOperator:
    """State preparation ``A`` whose objective-qubit one-probability is the target ``a``."""

    circuit: Circuit
    objective: int

    def __post_init__(self):
        if not 0 <= self.objective < self.circuit.n_qubits:
            raise ContractViolation("objective qubit outside the circuit")
        self._inverse = None

    @property
    def n_qubits(self):
        return self.circuit.n_qubits

    def prepare(self):
        return run_circuit(self.circuit)

    def grover_step(self, amps):
        """In-place ``Q = -A S_0 A^dagger S_chi`` on a raw amplitude array."""
        n = self.n_qubits
        if self._inverse is None:
            self._inverse = self.circuit.inverse()
        amps[_one_mask(n, self.objective)] *= -1.0
        for g in self._inverse.gates:
            _apply_inplace(amps, n, g)
        amps[0] *= -1.0
        for g in self.circuit.gates:
            _apply_inplace(amps, n, g)
        amps *= -1.0


def grover_power(op, k, state):
    """Apply ``Q^k`` to ``state`` (usually ``A|0>``)."""
    if k < 0:
        raise ContractViolation("Grover power must be non-negative")
    if state.n_qubits != op.n_qubits:
        raise ContractViolation("state and operator qubit counts differ")
    out = state.copy()
    for _ in range(k):
        op.grover_step(out.amplitudes)
    return out


def sample_measurements(state, qubit, shots, rng):
    """Number of ones in ``shots`` measurements of ``qubit`` (``rng``: numpy Generator)."""
    if shots < 1:
        raise ContractViolation("shots must be >= 1")
    return int(rng.binomial(shots, probability_of_one(state, qubit)))
