"""Dense statevector simulation of small qubit registers.

Gate set is {RY, RZ, CNOT}. Qubit 0 is the most significant bit of the
basis index, so for a 2-qubit register the amplitude order is
|00>, |01>, |10>, |11>.

All kernels operate on the last axis of an amplitude array and broadcast
over any leading axes, which lets callers evaluate batches of states with
one call. The public API works on single ``StateVector`` objects; the
``_raw`` helpers are the batched entry points used elsewhere in the
package.

Gradients come in two flavours:

* ``adjoint_gradients`` — exact reverse-mode differentiation of a Z
  expectation with one forward and one backward sweep. This is the
  production path.
* ``parameter_shift_grad`` — the two-point shift formula
  (E(theta + pi/2) - E(theta - pi/2)) / 2, kept as an independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConfigError, UsageError

RY = "RY"
RZ = "RZ"
CNOT = "CNOT"

ROTATION_KINDS = frozenset({RY, RZ})
GATE_KINDS = frozenset({RY, RZ, CNOT})


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GateOp:
    """One gate: a rotation (with an index into an angle vector) or a CNOT."""

    kind: str
    target: int
    control: int | None = None
    angle_index: int | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigError(f"unknown gate kind {self.kind!r}")
        if self.kind == CNOT:
            if self.control is None:
                raise ConfigError("CNOT requires a control qubit")
            if self.angle_index is not None:
                raise ConfigError("CNOT carries no angle index")
            if self.control == self.target:
                raise ConfigError("CNOT control equals target")
        else:
            if self.angle_index is None:
                raise ConfigError(f"{self.kind} requires an angle index")
            if self.control is not None:
                raise ConfigError(f"{self.kind} carries no control qubit")


@dataclass(frozen=True)
class CircuitProgram:
    """Ordered gate list over ``n_qubits`` wires and ``n_params`` angles."""

    n_qubits: int
    ops: tuple[GateOp, ...]
    n_params: int

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        if self.n_qubits < 1:
            raise ConfigError("n_qubits must be >= 1")
        if self.n_params < 0:
            raise ConfigError("n_params must be >= 0")
        seen = set()
        for op in self.ops:
            if not 0 <= op.target < self.n_qubits:
                raise ConfigError(f"target {op.target} out of range for {self.n_qubits} qubits")
            if op.control is not None and not 0 <= op.control < self.n_qubits:
                raise ConfigError(f"control {op.control} out of range for {self.n_qubits} qubits")
            if op.angle_index is not None:
                if not 0 <= op.angle_index < self.n_params:
                    raise ConfigError(f"angle index {op.angle_index} out of range")
                seen.add(op.angle_index)
        if len(seen) != self.n_params:
            missing = sorted(set(range(self.n_params)) - seen)
            raise ConfigError(f"parameter indices never referenced: {missing}")

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes of a qubit register (length must be a power of two)."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1 or amps.size < 2 or amps.size & (amps.size - 1):
            raise ConfigError("amplitude vector length must be a power of two >= 2")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def zero_state(n_qubits: int) -> StateVector:
    """|0...0> on ``n_qubits`` wires."""
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps)


# ---------------------------------------------------------------------------
# Cached index helpers (qubit 0 = most significant bit)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _index_pairs(n: int, qubit: int):
    """Basis indices with the qubit bit 0, and their bit-1 partners."""
    mask = 1 << (n - 1 - qubit)
    idx = np.arange(1 << n)
    i0 = idx[(idx & mask) == 0]
    i1 = i0 | mask
    i0.flags.writeable = False
    i1.flags.writeable = False
    return i0, i1


@lru_cache(maxsize=None)
def _z_signs(n: int, qubit: int) -> np.ndarray:
    """+1 where the qubit bit is 0, -1 where it is 1."""
    mask = 1 << (n - 1 - qubit)
    signs = np.where(np.arange(1 << n) & mask, -1.0, 1.0)
    signs.flags.writeable = False
    return signs


@lru_cache(maxsize=None)
def _cnot_perm(n: int, control: int, target: int) -> np.ndarray:
    cmask = 1 << (n - 1 - control)
    tmask = 1 << (n - 1 - target)
    idx = np.arange(1 << n)
    perm = np.where(idx & cmask, idx ^ tmask, idx)
    perm.flags.writeable = False
    return perm


# ---------------------------------------------------------------------------
# Raw kernels: amplitudes shaped (..., 2**n)
# ---------------------------------------------------------------------------


def _apply_ry(amps: np.ndarray, n: int, qubit: int, theta: float) -> np.ndarray:
    i0, i1 = _index_pairs(n, qubit)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    a0 = amps[..., i0]
    a1 = amps[..., i1]
    out = np.empty_like(amps)
    out[..., i0] = c * a0 - s * a1
    out[..., i1] = s * a0 + c * a1
    return out


def _apply_rz(amps: np.ndarray, n: int, qubit: int, theta: float) -> np.ndarray:
    # RZ = diag(e^{-i theta/2}, e^{+i theta/2}) on the qubit.
    return amps * np.exp(-0.5j * theta * _z_signs(n, qubit))


def _apply_op_raw(amps: np.ndarray, op: GateOp, angles: np.ndarray, n: int) -> np.ndarray:
    if op.kind == CNOT:
        return amps[..., _cnot_perm(n, op.control, op.target)]
    theta = float(angles[op.angle_index])
    if op.kind == RY:
        return _apply_ry(amps, n, op.target, theta)
    return _apply_rz(amps, n, op.target, theta)


def _apply_op_adjoint_raw(amps: np.ndarray, op: GateOp, angles: np.ndarray, n: int) -> np.ndarray:
    if op.kind == CNOT:
        return amps[..., _cnot_perm(n, op.control, op.target)]
    theta = -float(angles[op.angle_index])
    if op.kind == RY:
        return _apply_ry(amps, n, op.target, theta)
    return _apply_rz(amps, n, op.target, theta)


def _apply_op_derivative_raw(amps: np.ndarray, op: GateOp, angles: np.ndarray, n: int) -> np.ndarray:
    """Apply dU/dtheta of a rotation gate."""
    theta = float(angles[op.angle_index])
    if op.kind == RY:
        # d/dtheta [[c,-s],[s,c]] = 0.5*[[-s,-c],[c,-s]] with c=cos(t/2), s=sin(t/2)
        i0, i1 = _index_pairs(n, op.target)
        c, s = math.cos(theta / 2), math.sin(theta / 2)
        a0 = amps[..., i0]
        a1 = amps[..., i1]
        out = np.empty_like(amps)
        out[..., i0] = 0.5 * (-s * a0 - c * a1)
        out[..., i1] = 0.5 * (c * a0 - s * a1)
        return out
    signs = _z_signs(n, op.target)
    return amps * (-0.5j * signs * np.exp(-0.5j * theta * signs))


def _run_ops_raw(amps: np.ndarray, ops, angles: np.ndarray, n: int) -> np.ndarray:
    for op in ops:
        amps = _apply_op_raw(amps, op, angles, n)
    return amps


def _expect_z_raw(amps: np.ndarray, qubit: int, n: int) -> np.ndarray:
    probs = amps.real**2 + amps.imag**2
    return probs @ _z_signs(n, qubit)


def _adjoint_multi_raw(
    program: CircuitProgram,
    init: np.ndarray,
    angles: np.ndarray,
    obs_qubits,
    want_theta: bool = True,
    want_init: bool = True,
):
    """Adjoint sweep for several Z observables sharing one circuit.

    Returns ``(expvals, dtheta, dinit)`` where ``expvals`` has shape
    (n_obs, ...), ``dtheta`` (n_obs, ..., n_params) and ``dinit``
    (n_obs, ..., dim). ``dinit[c]`` packs d<Z_c>/dRe(a_j) in its real
    part and d<Z_c>/dIm(a_j) in its imaginary part. Skipped outputs are
    returned as None.
    """
    n = program.n_qubits
    ket = _run_ops_raw(init, program.ops, angles, n)
    bras = np.stack([_z_signs(n, q) * ket for q in obs_qubits])
    expvals = np.real(np.einsum("c...d,...d->c...", bras, ket.conj()))

    dtheta = None
    if want_theta:
        dtheta = np.zeros((len(obs_qubits),) + init.shape[:-1] + (program.n_params,))
    if not want_theta and not want_init:
        return expvals, None, None

    for op in reversed(program.ops):
        ket = _apply_op_adjoint_raw(ket, op, angles, n)
        if want_theta and op.kind != CNOT:
            ktmp = _apply_op_derivative_raw(ket, op, angles, n)
            contrib = 2.0 * np.real(np.einsum("c...d,...d->c...", bras.conj(), ktmp))
            dtheta[..., op.angle_index] += contrib
        bras = _apply_op_adjoint_raw(bras, op, angles, n)

    dinit = 2.0 * bras if want_init else None
    return expvals, dtheta, dinit


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def _check_angles(angles, n_params: int) -> np.ndarray:
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != (n_params,):
        raise ConfigError(f"expected {n_params} angles, got shape {angles.shape}")
    return angles


def apply_gate(state: StateVector, op: GateOp, angles=()) -> StateVector:
    """Apply one gate; rotations read their angle from ``angles``."""
    n = state.n_qubits
    if not 0 <= op.target < n:
        raise ConfigError(f"target {op.target} out of range for {n} qubits")
    if op.control is not None and not 0 <= op.control < n:
        raise ConfigError(f"control {op.control} out of range for {n} qubits")
    angles = np.asarray(angles, dtype=np.float64)
    if op.angle_index is not None and not 0 <= op.angle_index < angles.size:
        raise ConfigError(f"angle index {op.angle_index} out of range")
    return StateVector(_apply_op_raw(state.amplitudes, op, angles, n))


def run_circuit(program: CircuitProgram, initial: StateVector, angles) -> StateVector:
    """Apply every gate of ``program`` in order."""
    if initial.n_qubits != program.n_qubits:
        raise ConfigError(
            f"state has {initial.n_qubits} qubits, program expects {program.n_qubits}"
        )
    angles = _check_angles(angles, program.n_params)
    return StateVector(_run_ops_raw(initial.amplitudes, program.ops, angles, program.n_qubits))


def expectation_z(state: StateVector, qubit: int) -> float:
    """<Z> on one qubit: sum of |a_i|^2 signed by the qubit's bit."""
    if not 0 <= qubit < state.n_qubits:
        raise ConfigError(f"qubit {qubit} out of range for {state.n_qubits} qubits")
    return float(_expect_z_raw(state.amplitudes, qubit, state.n_qubits))


def adjoint_gradients(
    program: CircuitProgram, initial: StateVector, angles, observable_qubit: int
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of <Z_observable> w.r.t. every angle and every initial amplitude.

    Returns ``(dtheta, dinit)``. ``dinit`` is complex: its real part is the
    derivative w.r.t. the real part of each amplitude, its imaginary part
    the derivative w.r.t. the imaginary part.
    """
    if initial.n_qubits != program.n_qubits:
        raise ConfigError(
            f"state has {initial.n_qubits} qubits, program expects {program.n_qubits}"
        )
    if not 0 <= observable_qubit < program.n_qubits:
        raise ConfigError(f"observable qubit {observable_qubit} out of range")
    angles = _check_angles(angles, program.n_params)
    _, dtheta, dinit = _adjoint_multi_raw(
        program, initial.amplitudes, angles, (observable_qubit,)
    )
    return dtheta[0], dinit[0]


def parameter_shift_grad(
    program: CircuitProgram,
    initial: StateVector,
    angles,
    observable_qubit: int,
    param: int,
) -> float:
    """Two-point shift rule for one rotation parameter."""
    angles = _check_angles(angles, program.n_params)
    hit = any(op.angle_index == param for op in program.ops if op.kind in ROTATION_KINDS)
    if not hit:
        raise UsageError(f"parameter {param} is not attached to a rotation gate")

    def run(shift: float) -> float:
        shifted = angles.copy()
        shifted[param] += shift
        final = run_circuit(program, initial, shifted)
        return expectation_z(final, observable_qubit)

    return (run(math.pi / 2) - run(-math.pi / 2)) / 2.0
