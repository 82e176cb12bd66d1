"""Statevector basics: gates, expectations, and three routes to the same gradient.

Run:  python demos/01_simulator_and_gradients.py
"""

import numpy as np

import qflsim as q

# A single qubit rotated by RY(theta) has <Z> = cos(theta).
prog = q.CircuitProgram(n_qubits=1, ops=(q.GateOp(q.RY, target=0, angle_index=0),), n_params=1)
print("theta      <Z>        cos(theta)")
for theta in (0.0, 0.5, np.pi / 2, 2.5):
    state = q.run_circuit(prog, q.zero_state(1), [theta])
    print(f"{theta:5.2f}  {q.expectation_z(state, 0):+9.6f}  {np.cos(theta):+9.6f}")

# A Bell pair from scratch.
bell = q.apply_gate(q.zero_state(2), q.GateOp(q.RY, target=0, angle_index=0), [np.pi / 2])
bell = q.apply_gate(bell, q.GateOp(q.CNOT, target=1, control=0))
print("\nBell amplitudes:", np.round(bell.amplitudes, 6))

# Gradients of a random 4-qubit circuit, three ways.
rng = np.random.default_rng(0)
cfg = q.ModelConfig(n_qubits=4, n_layers=2, input_dim=16)
ansatz = q.build_ansatz(cfg)
angles = rng.uniform(0, 2 * np.pi, ansatz.n_params)
init = q.zero_state(4)

dtheta, _ = q.adjoint_gradients(ansatz, init, angles, observable_qubit=0)
shift = np.array(
    [q.parameter_shift_grad(ansatz, init, angles, 0, p) for p in range(ansatz.n_params)]
)

h = 1e-5
fd = np.empty_like(angles)
for i in range(angles.size):
    hi, lo = angles.copy(), angles.copy()
    hi[i] += h
    lo[i] -= h
    fd[i] = (
        q.expectation_z(q.run_circuit(ansatz, init, hi), 0)
        - q.expectation_z(q.run_circuit(ansatz, init, lo), 0)
    ) / (2 * h)

print("\nadjoint vs parameter-shift, max |diff|:", np.max(np.abs(dtheta - shift)))
print("adjoint vs finite differences, max |diff|:", np.max(np.abs(dtheta - fd)))
