"""Spin-1 operator algebra for a V-degenerate qutrit.

Basis ordering is |+1>, |0>, |-1> everywhere in this package, so that
Sz = diag(1, 0, -1) and bra-ket expressions transcribe directly.

The operator basis consists of the three spin-1 operators Sx, Sy, Sz and
their anticommutators

    Sxt = {Sx, Sz},   Syt = {Sy, Sz},   Szt = {Sx, Sy},

written in terms of the eight Gell-Mann matrices as

    Sx  = (l6 + l1)/sqrt(2),   Sy  = (l2 + l7)/sqrt(2),   Sz = (l3 + sqrt(3) l8)/2,
    Sxt = (l1 - l6)/sqrt(2),   Syt = (l2 - l7)/sqrt(2),   Szt = l5.

The pulse alphabet is the set of +-pi/2 rotations generated by
{Sx, Sy, Sxt, Syt} (labels "X", "Y", "Xt", "Yt") plus the z rotation
("Z").  Conjugation by any of these maps the six-operator basis onto
itself up to sign; the closed action is tabulated in ``ROTATION_ACTION``
and verified numerically by :func:`verify_rotation_table`.

Sign convention note: the closed action is fixed by the operator
definitions above.  Since {Sxt, Syt} = -{Sx, Sy}, flipping the sign
convention of Szt flips exactly the eight table entries that involve it;
all entries here are the ones consistent with Szt = {Sx, Sy}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)
SQRT3 = np.sqrt(3.0)

_GELL_MANN = {
    1: np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex),
    2: np.array([[0, -1j, 0], [1j, 0, 0], [0, 0, 0]], dtype=complex),
    3: np.array([[1, 0, 0], [0, -1, 0], [0, 0, 0]], dtype=complex),
    4: np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0]], dtype=complex),
    5: np.array([[0, 0, -1j], [0, 0, 0], [1j, 0, 0]], dtype=complex),
    6: np.array([[0, 0, 0], [0, 0, 1], [0, 1, 0]], dtype=complex),
    7: np.array([[0, 0, 0], [0, 0, -1j], [0, 1j, 0]], dtype=complex),
    8: np.array([[1, 0, 0], [0, 1, 0], [0, 0, -2]], dtype=complex) / SQRT3,
}

#: 3x3 matrices of the six-operator basis, keyed by label.
SPIN_MATS: dict[str, np.ndarray] = {
    "Sx": (_GELL_MANN[6] + _GELL_MANN[1]) / SQRT2,
    "Sy": (_GELL_MANN[2] + _GELL_MANN[7]) / SQRT2,
    "Sz": 0.5 * (_GELL_MANN[3] + SQRT3 * _GELL_MANN[8]),
    "Sxt": (_GELL_MANN[1] - _GELL_MANN[6]) / SQRT2,
    "Syt": (_GELL_MANN[2] - _GELL_MANN[7]) / SQRT2,
    "Szt": _GELL_MANN[5],
}
for _m in SPIN_MATS.values():
    _m.setflags(write=False)
for _m in _GELL_MANN.values():
    _m.setflags(write=False)

OPERATOR_LABELS = ("Sx", "Sy", "Sz", "Sxt", "Syt", "Szt")

#: pulse label -> generator label
AXIS_TO_OPERATOR = {"X": "Sx", "Y": "Sy", "Xt": "Sxt", "Yt": "Syt", "Z": "Sz"}

IDENTITY_3 = np.eye(3, dtype=complex)
IDENTITY_3.setflags(write=False)

# Closed action of the +pi/2 rotations on the operator basis:
# ROTATION_ACTION[axis][op] = (sign, op') meaning  U op U† = sign * op'
# for U = exp(-i (pi/2) S_axis).  24 entries, each an exact identity.
ROTATION_ACTION: dict[str, dict[str, tuple[int, str]]] = {
    "X": {"Sx": (+1, "Sx"), "Sy": (+1, "Sz"), "Sz": (-1, "Sy"),
          "Sxt": (-1, "Szt"), "Syt": (-1, "Syt"), "Szt": (+1, "Sxt")},
    "Y": {"Sx": (-1, "Sz"), "Sy": (+1, "Sy"), "Sz": (+1, "Sx"),
          "Sxt": (-1, "Sxt"), "Syt": (+1, "Szt"), "Szt": (-1, "Syt")},
    "Xt": {"Sx": (+1, "Szt"), "Sy": (-1, "Sy"), "Sz": (-1, "Syt"),
           "Sxt": (+1, "Sxt"), "Syt": (+1, "Sz"), "Szt": (-1, "Sx")},
    "Yt": {"Sx": (-1, "Sx"), "Sy": (-1, "Szt"), "Sz": (+1, "Sxt"),
           "Sxt": (-1, "Sz"), "Syt": (+1, "Syt"), "Szt": (+1, "Sy")},
}

# Action of conjugation by Z = exp(-i(pi/2)Sz) on pulse axes:
# Z X Z† = Y, Z Y Z† = X^{-1}, and likewise for the tilde pair.
Z_CONJ_AXIS = {"X": ("Y", +1), "Y": ("X", -1), "Xt": ("Yt", +1),
               "Yt": ("Xt", -1), "Z": ("Z", +1), "I": ("I", +1)}


@dataclass(frozen=True, eq=False)
class QutritOperator:
    """A labelled Hermitian 3x3 operator."""

    matrix: np.ndarray
    label: str

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True, eq=False)
class QutritUnitary:
    """A 3x3 unitary with the generator word that produced it.

    ``canonical`` marks matrices already passed through
    :func:`canonical_phase`.
    """

    matrix: np.ndarray
    word: str = ""
    canonical: bool = False

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def make_gellmann(index: int) -> QutritOperator:
    """Return Gell-Mann matrix ``index`` (1..8) as a QutritOperator."""
    if index not in _GELL_MANN:
        raise ValueError(f"Gell-Mann index must be in 1..8, got {index}")
    return QutritOperator(_GELL_MANN[index], f"l{index}")


def make_spin_operators() -> dict[str, QutritOperator]:
    """Return the six-operator basis {Sx, Sy, Sz, Sxt, Syt, Szt}."""
    return {k: QutritOperator(v, k) for k, v in SPIN_MATS.items()}


def _rotation_matrix(op: np.ndarray, sign: float) -> np.ndarray:
    # All generators satisfy op^3 = op (spectrum {-1, 0, +1}), so the
    # exponential truncates exactly.
    theta = sign * np.pi / 2.0
    return (IDENTITY_3 - 1j * np.sin(theta) * op
            + (np.cos(theta) - 1.0) * (op @ op))


def rotation(axis: str, sign: int = +1) -> QutritUnitary:
    """exp(-i * sign * (pi/2) * S_axis) for axis in {X, Y, Xt, Yt, Z}."""
    if axis not in AXIS_TO_OPERATOR:
        raise ValueError(f"unsupported rotation axis {axis!r}")
    if sign not in (+1, -1):
        raise ValueError(f"rotation sign must be +-1, got {sign}")
    op = SPIN_MATS[AXIS_TO_OPERATOR[axis]]
    word = axis if sign > 0 else axis + "-"
    return QutritUnitary(_rotation_matrix(op, sign), word=word)


def conjugate(u: QutritUnitary | np.ndarray, op: QutritOperator | np.ndarray):
    """U O U† keeping the input container type."""
    um = u.matrix if isinstance(u, QutritUnitary) else np.asarray(u)
    if isinstance(op, QutritOperator):
        return QutritOperator(um @ op.matrix @ um.conj().T, op.label + "'")
    return um @ np.asarray(op) @ um.conj().T


# ---------------------------------------------------------------------------
# global-phase canonicalization


def canonical_phase_matrix(u: np.ndarray, tie_tol: float = 1e-7) -> np.ndarray:
    """Rotate the global phase so a fixed reference entry is real positive.

    The reference entry is the first one (row-major) whose modulus lies
    within ``tie_tol`` of the maximum.  Moduli are phase-invariant, so two
    inputs equal up to a global phase select the same entry and map to the
    same output; applying the function twice is a no-op.
    """
    flat = u.ravel()
    mods = np.abs(flat)
    idx = int(np.argmax(mods >= mods.max() - tie_tol))
    phase = flat[idx] / mods[idx]
    return u * np.conj(phase)


def canonical_phase(u: QutritUnitary) -> QutritUnitary:
    """Phase-canonical form of ``u`` (see :func:`canonical_phase_matrix`)."""
    if u.canonical:
        return u
    return QutritUnitary(canonical_phase_matrix(u.matrix), word=u.word,
                         canonical=True)


def unitary_key(u: np.ndarray, decimals: int = 6) -> bytes:
    """Hashable key identifying a unitary up to global phase.

    Entries of the canonical form are quantized to ``decimals`` places;
    adding 0.0 normalizes -0.0 so the byte representation is unique.
    Group elements generated from the pi/2 alphabet are separated by
    O(1) in max norm, far above the quantization scale.
    """
    m = canonical_phase_matrix(np.asarray(u))
    re = np.round(m.real, decimals) + 0.0
    im = np.round(m.imag, decimals) + 0.0
    return re.tobytes() + im.tobytes()


# ---------------------------------------------------------------------------
# verification


def rotation_table_report(tol: float = 1e-12) -> list[dict]:
    """Check all 24 closed-action identities U op U† = sign * op'.

    Returns one record per (rotation, operator) pair with the numerical
    residual; ``passed`` is True when the residual is below ``tol``.
    """
    report = []
    for axis, row in ROTATION_ACTION.items():
        u = rotation(axis).matrix
        for op_label, (sign, target) in row.items():
            got = u @ SPIN_MATS[op_label] @ u.conj().T
            residual = float(np.abs(got - sign * SPIN_MATS[target]).max())
            report.append({
                "rotation": axis,
                "operator": op_label,
                "expected": ("+" if sign > 0 else "-") + target,
                "residual": residual,
                "passed": bool(residual < tol),
            })
    return report


def verify_rotation_table(tol: float = 1e-12) -> bool:
    """True when all 24 conjugation identities hold within ``tol``."""
    return all(entry["passed"] for entry in rotation_table_report(tol))


def operator_coefficients(matrix: np.ndarray) -> dict[str, float]:
    """Decompose a traceless Hermitian 3x3 matrix over the operator basis.

    All six basis operators have Tr(O^2) = 2, and they are mutually
    trace-orthogonal, so the coefficients are Tr(O M)/2.
    """
    return {label: float(np.trace(SPIN_MATS[label].conj().T @ matrix).real) / 2.0
            for label in OPERATOR_LABELS}
