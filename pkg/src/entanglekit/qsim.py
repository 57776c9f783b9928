"""Dense statevector simulation of the SWAP and Hadamard overlap tests.

Qubit 0 is the most significant bit of a basis index. A register of ``N``
qubits is stored as an array of shape ``(2,) * N``; the ancilla is always
qubit 0.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DimensionError, DomainError, NormalizationError
from .features import amplitude_prepare

MAX_QUBITS = 19  # SWAP test on two 9-qubit encodings plus the ancilla

_H = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / math.sqrt(2.0)
# phase gate used for the imaginary part: diag(1, -i)
_S_IM = np.array([[1.0, 0.0], [0.0, -1j]], dtype=np.complex128)


@dataclass(frozen=True)
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128).ravel()
        if amps.shape[0] != 1 << int(self.n_qubits):
            raise DimensionError(f"{amps.shape[0]} amplitudes for {self.n_qubits} qubits")
        if abs(np.linalg.norm(amps) - 1.0) > 1e-12:
            raise NormalizationError("state vector is not normalized")
        object.__setattr__(self, "amplitudes", amps)


@dataclass(frozen=True)
class ShotPlan:
    epsilon: float
    delta: float
    shots: int


def encode(x, n_qubits=None):
    """Amplitude-encode a real feature vector."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if n_qubits is None:
        n_qubits = max(1, (x.shape[0] - 1).bit_length())
    return StateVector(int(n_qubits), amplitude_prepare(x, n_qubits).astype(np.complex128))


class Register:
    """Minimal dense simulator with the gates the overlap circuits need."""

    def __init__(self, n_qubits):
        if n_qubits > MAX_QUBITS:
            raise CapacityError(f"{n_qubits} qubits exceed the simulator cap of {MAX_QUBITS}")
        self.n = int(n_qubits)
        self.psi = np.zeros((2,) * self.n, dtype=np.complex128)
        self.psi[(0,) * self.n] = 1.0

    def load(self, first, amplitudes):
        """Overwrite qubits ``first..`` (currently |0...0>) with a product factor."""
        k = (np.asarray(amplitudes).shape[0] - 1).bit_length()
        lead = self.psi[(slice(None),) * first + (0,) * k]
        factor = np.asarray(amplitudes, dtype=np.complex128).reshape((2,) * k)
        moved = np.multiply.outer(lead, factor)
        # restore axis order: qubits before, inserted block, qubits after
        before = list(range(first))
        after = list(range(first, self.n - k))
        block = list(range(self.n - k, self.n))
        self.psi = np.ascontiguousarray(moved.transpose(before + block + after))

    def gate1(self, q, g):
        self.psi = np.moveaxis(np.tensordot(g, self.psi, axes=([1], [q])), 0, q)

    def cswap(self, c, a, b):
        """Fredkin gate: swap qubits ``a`` and ``b`` when qubit ``c`` is 1."""
        idx = [slice(None)] * self.n
        idx[c] = 1
        sub = self.psi[tuple(idx)]
        ax_a, ax_b = a - (a > c), b - (b > c)
        self.psi[tuple(idx)] = np.swapaxes(sub, ax_a, ax_b).copy()

    def controlled(self, c, value, first, k, op):
        """Apply ``op`` to the ``2**k`` amplitudes of qubits ``first..first+k-1``
        in the branch where qubit ``c`` equals ``value``. Requires ``c < first``."""
        idx = [slice(None)] * self.n
        idx[c] = value
        sub = self.psi[tuple(idx)]
        lead = first - 1
        shp = sub.shape
        flat = sub.reshape((2 ** lead, 2 ** k, -1))
        out = np.empty_like(flat)
        for i in range(flat.shape[0]):
            for j in range(flat.shape[2]):
                out[i, :, j] = op(flat[i, :, j])
        self.psi[tuple(idx)] = out.reshape(shp)

    def prob(self, q, value):
        idx = [slice(None)] * self.n
        idx[q] = value
        amp = self.psi[tuple(idx)]
        return float(np.sum(amp.real ** 2 + amp.imag ** 2))


def _pair(psi, phi):
    if psi.n_qubits != phi.n_qubits:
        raise DimensionError(f"states have {psi.n_qubits} and {phi.n_qubits} qubits")
    return psi.n_qubits


def swap_test_p0(psi, phi, return_register=False):
    """Probability of reading 0 on the ancilla of the SWAP test.

    The register holds the ancilla, then ``psi``, then ``phi`` (``2n + 1``
    qubits). The circuit is H, controlled swaps of matching qubit pairs,
    H, measure.
    """
    n = _pair(psi, phi)
    reg = Register(2 * n + 1)
    reg.load(1, psi.amplitudes)
    reg.load(1 + n, phi.amplitudes)
    reg.gate1(0, _H)
    for j in range(n):
        reg.cswap(0, 1 + j, 1 + n + j)
    reg.gate1(0, _H)
    p0 = reg.prob(0, 0)
    return (p0, reg) if return_register else p0


def householder_prep(psi):
    """Unitary ``U`` (as a function) with ``U |0> = psi``.

    ``U = e^{i theta} (I - 2 v v^H / v^H v)`` with ``v = e^{i theta} e_0 - psi``
    and ``theta`` the phase of ``psi[0]``.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    z = psi[0]
    ph = z / abs(z) if abs(z) > 0 else 1.0 + 0j
    v = -psi.copy()
    v[0] += ph
    vv = float(np.vdot(v, v).real)
    if vv < 1e-30:
        return lambda u: ph * u
    return lambda u: ph * (u - (2.0 / vv) * v * np.vdot(v, u))


def hadamard_test(psi, phi, part="Re", return_register=False):
    """Probability of reading 0 on the ancilla of the Hadamard test.

    The register holds the ancilla and ``n`` data qubits. After H on the
    ancilla, the data register is prepared as ``psi`` when the ancilla is 0
    and as ``phi`` when it is 1; for ``part="Im"`` the ancilla then passes
    through ``diag(1, -i)``; a final H and measurement follow. The result is
    ``(1 + Re<psi|phi>) / 2`` or ``(1 + Im<psi|phi>) / 2``.
    """
    if part not in ("Re", "Im"):
        raise ValueError(f"part must be 'Re' or 'Im', got {part!r}")
    n = _pair(psi, phi)
    reg = Register(n + 1)
    reg.gate1(0, _H)
    reg.controlled(0, 0, 1, n, householder_prep(psi.amplitudes))
    reg.controlled(0, 1, 1, n, householder_prep(phi.amplitudes))
    if part == "Im":
        reg.gate1(0, _S_IM)
    reg.gate1(0, _H)
    p0 = reg.prob(0, 0)
    return (p0, reg) if return_register else p0


def shots_required(epsilon, delta):
    """Hoeffding shot count ``ceil(ln(2/delta) / (2 epsilon^2))``."""
    if not (0.0 < epsilon < 1.0):
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not (0.0 < delta < 1.0):
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return ShotPlan(float(epsilon), float(delta), int(math.ceil(math.log(2.0 / delta) / (2.0 * epsilon ** 2))))


def sampled_p0(p0, shots, rng):
    """Empirical frequency of outcome 0 over ``shots`` Bernoulli trials."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    return rng.binomial(int(shots), min(max(float(p0), 0.0), 1.0)) / shots


def sampled_kernel(x, y, shots, rng, n_qubits=None):
    """Finite-shot SWAP-test estimate of the amplitude kernel, clamped to [0, 1]."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if n_qubits is None:
        n_qubits = max(1, (max(x.shape[0], y.shape[0]) - 1).bit_length())
    p0 = swap_test_p0(encode(x, n_qubits), encode(y, n_qubits))
    return min(max(2.0 * sampled_p0(p0, shots, rng) - 1.0, 0.0), 1.0)


def circuit_kernel(x, y, n_qubits=None):
    """Exact amplitude kernel ``2 p0 - 1`` read off the simulated SWAP test."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if n_qubits is None:
        n_qubits = max(1, (max(x.shape[0], y.shape[0]) - 1).bit_length())
    return 2.0 * swap_test_p0(encode(x, n_qubits), encode(y, n_qubits)) - 1.0


def circuit_gram(X, Y=None, n_qubits=None):
    X = np.atleast_2d(X)
    sym = Y is None
    Y = X if sym else np.atleast_2d(Y)
    G = np.empty((X.shape[0], Y.shape[0]))
    for i in range(X.shape[0]):
        for j in range(Y.shape[0]):
            if sym and j < i:
                G[i, j] = G[j, i]
            else:
                G[i, j] = circuit_kernel(X[i], Y[j], n_qubits)
    return G
