"""Group-theoretic search for dipolar-decoupling pulse sequences.

The pulse alphabet V = {X, Y, Xt, Yt} of +pi/2 rotations generates a
finite group once global phases are quotiented out (the BFS closure here
finds 96 phase-canonical elements).  Conjugating the energy-conserving
pair Hamiltonian h_ec by a frame g permutes the weights it assigns to the
six basis operators, so a set of frames averages h_ec to zero exactly when
the Sz weight and the Szt weight visit every operator slot once each:
identity-containing solutions need at least six frames.

Frames reachable by consecutive single pulses form walks on the Cayley
graph.  The exhaustive walk census finds 40 order-six solutions and none
smaller; exactly two per initial pulse have the symmetric shape

    [P1, Q, P3, Q, P5]   (one generator repeated at both even slots),

and these eight, closed under reversal in doublet pairs, are the canonical
family returned by :func:`find_minimal_subsets`.  The remaining walks are
kept in the census for completeness.

Interleaving the balanced Z train converts any five-pulse solution into an
eleven-pulse sequence that cancels h_ec + h_nc at zeroth order: Z flips
the sign of h_nc, so consecutive (tau-Z-tau) blocks cancel it pairwise,
while the surviving h_ec sees the five base frames with the even-interval
accumulated z rotations absorbed (h_ec is z-invariant).  The physical
pulse at base slot j is the base pulse conjugated by Z^{-j}, which swaps
X,Xt with Y,Yt on odd slots and fixes the letters (up to sign) on even
slots.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement, product

import numpy as np

from .control import Pulse, PulseSequence, pulse_to_unitary, toggling_frames
from .dipole import PairGeometry, pair_hamiltonian
from .operators import (
    IDENTITY_3,
    OPERATOR_LABELS,
    SPIN_MATS,
    Z_CONJ_AXIS,
    canonical_phase_matrix,
    operator_coefficients,
    rotation,
    unitary_key,
)

GENERATOR_LABELS = ("X", "Y", "Xt", "Yt")

#: weights h_ec assigns to (Sx, Sy, Sz, Sxt, Syt, Szt) tensor squares
_EC_WEIGHTS = np.array([-1.0, -1.0, 4.0, -1.0, -1.0, 0.0])


class GroupDivergence(RuntimeError):
    """BFS closure exceeded the cap; indicates broken phase canonicalization."""


@dataclass(frozen=True, eq=False)
class GroupElement:
    unitary: np.ndarray          # phase-canonical
    word: str
    index: int

    def __post_init__(self):
        m = np.asarray(self.unitary, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "unitary", m)


@dataclass(frozen=True, eq=False)
class CayleyGraph:
    vertices: tuple[GroupElement, ...]
    edges: tuple[tuple[int, str, int], ...]   # (from, generator, to)
    generators: dict[str, np.ndarray]

    @property
    def order(self) -> int:
        return len(self.vertices)

    def element_index(self, u: np.ndarray) -> int | None:
        key = unitary_key(u)
        return self._index().get(key)

    def _index(self) -> dict[bytes, int]:
        if not hasattr(self, "_key_map"):
            object.__setattr__(self, "_key_map",
                               {unitary_key(v.unitary): v.index
                                for v in self.vertices})
        return self._key_map


def default_generators() -> dict[str, np.ndarray]:
    return {lab: rotation(lab).matrix for lab in GENERATOR_LABELS}


def generate_group(generators: dict[str, np.ndarray] | None = None,
                   cap: int = 100_000) -> CayleyGraph:
    """BFS closure of the generator set under phase-canonical multiplication."""
    gens = generators if generators is not None else default_generators()
    start = canonical_phase_matrix(IDENTITY_3.copy())
    vertices = [GroupElement(start, "", 0)]
    index = {unitary_key(start): 0}
    edges = []
    frontier = [0]
    while frontier:
        nxt = []
        for ui in frontier:
            u = vertices[ui].unitary
            for lab, gmat in gens.items():
                prod_mat = canonical_phase_matrix(u @ gmat)
                key = unitary_key(prod_mat)
                if key not in index:
                    if len(vertices) >= cap:
                        raise GroupDivergence(
                            f"group closure exceeded cap of {cap} elements")
                    word = (vertices[ui].word + "." + lab).lstrip(".")
                    index[key] = len(vertices)
                    vertices.append(GroupElement(prod_mat, word, index[key]))
                    nxt.append(index[key])
                edges.append((ui, lab, index[key]))
        frontier = nxt
    return CayleyGraph(tuple(vertices), tuple(edges), dict(gens))


def conjugation_action(u: np.ndarray) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Signed permutation (perm, signs) of the operator basis under U . U†.

    Every element of the rotation group maps each basis operator onto
    +-(another basis operator); raises if that fails.
    """
    perm, signs = [], []
    for label in OPERATOR_LABELS:
        coeffs = operator_coefficients(u @ SPIN_MATS[label] @ u.conj().T)
        hits = [(k, c) for k, (lab2, c) in
                enumerate(coeffs.items()) if abs(c) > 1e-6]
        if len(hits) != 1 or abs(abs(hits[0][1]) - 1.0) > 1e-9:
            raise ValueError("element does not act as a signed permutation")
        perm.append(hits[0][0])
        signs.append(+1 if hits[0][1] > 0 else -1)
    return tuple(perm), tuple(signs)


def _ec_weight_vector(perm: tuple[int, ...]) -> tuple[float, ...]:
    out = [0.0] * 6
    for k in range(6):
        out[perm[k]] = _EC_WEIGHTS[k]
    return tuple(out)


# ---------------------------------------------------------------------------
# projection and averages


def _frame_matrices(frames) -> list[np.ndarray]:
    out = []
    for f in frames:
        out.append(f.unitary if isinstance(f, GroupElement) else np.asarray(f))
    return out


def project(frames, h_pair: np.ndarray) -> np.ndarray:
    """(1/n) sum_g (g (x) g) H (g (x) g)† over the frame set."""
    mats = _frame_matrices(frames)
    if not mats:
        raise ValueError("empty frame set")
    acc = np.zeros_like(h_pair, dtype=complex)
    for g in mats:
        g2 = np.kron(g, g)
        acc += g2 @ h_pair @ g2.conj().T
    return acc / len(mats)


def _nfold_kron(u: np.ndarray, n: int) -> np.ndarray:
    out = u
    for _ in range(n - 1):
        out = np.kron(out, u)
    return out


def _as_dense_hamiltonian(h) -> tuple[np.ndarray, int]:
    if hasattr(h, "dense"):           # EnsembleHamiltonian
        return h.dense(), h.n_spins
    h = np.asarray(h)
    n = round(np.log(h.shape[0]) / np.log(3.0))
    if 3 ** n != h.shape[0]:
        raise ValueError(f"dimension {h.shape[0]} is not a power of three")
    return h, n


def aht_zeroth(seq, hamiltonian) -> np.ndarray:
    """Zeroth-order average Hamiltonian of a uniform-interval sequence.

    Builds the dynamical toggling frames of the pulse list and returns the
    interval-weighted average of the frame-conjugated Hamiltonian.  Accepts
    a PulseSequence or a plain pulse list, and a pair (9x9), dense
    multi-site, or EnsembleHamiltonian operator.
    """
    pulses = seq.pulses if isinstance(seq, PulseSequence) else tuple(seq)
    h, n_sites = _as_dense_hamiltonian(hamiltonian)
    frames = toggling_frames(pulses)
    acc = np.zeros_like(h, dtype=complex)
    for f in frames:
        fn = _nfold_kron(f, n_sites)
        acc += fn @ h @ fn.conj().T
    return acc / len(frames)


def aht_first(seq, hamiltonian, tau: float = 1.0) -> np.ndarray:
    """First-order average Hamiltonian (piecewise-constant double sum).

    H1 = (tau / (2 i n_int)) * sum_{j>k} [H_j, H_k] with H_m the
    toggling-frame Hamiltonian of interval m.  Vanishes identically for
    time-symmetric sequences.
    """
    pulses = seq.pulses if isinstance(seq, PulseSequence) else tuple(seq)
    h, n_sites = _as_dense_hamiltonian(hamiltonian)
    frames = toggling_frames(pulses)
    toggled = []
    for f in frames:
        fn = _nfold_kron(f, n_sites)
        toggled.append(fn @ h @ fn.conj().T)
    acc = np.zeros_like(h, dtype=complex)
    for jj in range(len(toggled)):
        for kk in range(jj):
            acc += toggled[jj] @ toggled[kk] - toggled[kk] @ toggled[jj]
    return acc * (tau / (2j * len(frames)))


def symmetrize(seq: PulseSequence) -> PulseSequence:
    """Append the time-reversed sequence (reverse order, inverted signs).

    The junction carries an identity placeholder so the interval grid
    stays uniform: n pulses become 2n + 1 pulses over 2n + 2 intervals.
    The mirrored frame list cancels the first-order average Hamiltonian.
    """
    if not seq.pulses:
        return seq
    reverse = tuple(p.inverse() for p in reversed(seq.pulses))
    return PulseSequence(seq.pulses + (Pulse("I"),) + reverse,
                         label=(seq.label + "+rev") if seq.label else "sym",
                         symmetrized=True, tau_ns=seq.tau_ns,
                         pulse_ns=seq.pulse_ns)


# ---------------------------------------------------------------------------
# minimal decoupling subsets


def probe_pair_hamiltonian() -> tuple[np.ndarray, np.ndarray]:
    """(h_ec, h_nc) at the search probe geometry theta = pi/2, phi = 0, r = 1.

    Maximal |1 - 3 cos^2 theta| with nonzero h_nc, so accidental zeros
    cannot mask non-solutions.
    """
    ph = pair_hamiltonian(PairGeometry(1.0, np.pi / 2.0, 0.0))
    return ph.h_ec, ph.h_nc


@dataclass(frozen=True, eq=False)
class SearchPath:
    """One single-pulse traversal: five generator labels from identity."""

    pulses: tuple[str, ...]
    frames: tuple[np.ndarray, ...]    # 6 phase-canonical frames, identity first

    @property
    def initial_pulse(self) -> str:
        return self.pulses[0]

    @property
    def is_canonical(self) -> bool:
        """Symmetric shape: the same generator at both even slots."""
        return len(self.pulses) == 5 and self.pulses[1] == self.pulses[3]


@dataclass(frozen=True, eq=False)
class DecouplingSubset:
    """Order-six decoupling solution class for one initial pulse."""

    initial_pulse: str
    paths: tuple[SearchPath, ...]

    @property
    def frames(self) -> tuple[np.ndarray, ...]:
        return self.paths[0].frames

    @property
    def order(self) -> int:
        return len(self.paths[0].frames)


@dataclass(frozen=True, eq=False)
class SearchResult:
    subsets: tuple[DecouplingSubset, ...]
    census: tuple[SearchPath, ...]        # all order-six walk solutions
    solution_order: int | None
    orders_without_solutions: tuple[int, ...]
    no_smaller_subset: bool               # exhaustive subset-level proof
    group_order: int

    @property
    def canonical_paths(self) -> list[SearchPath]:
        return [p for s in self.subsets for p in s.paths]


def _enumerate_walks(graph: CayleyGraph, h_probe: np.ndarray,
                     n_steps: int, tol: float = 1e-12) -> list[SearchPath]:
    """All identity-rooted walks of n_steps distinct frames that average
    the probe to zero."""
    gens = {lab: graph.generators[lab] for lab in GENERATOR_LABELS}
    solutions = []
    for walk in product(GENERATOR_LABELS, repeat=n_steps):
        frames = [IDENTITY_3.copy()]
        keys = {unitary_key(frames[0])}
        cur = frames[0]
        ok = True
        for lab in walk:
            cur = canonical_phase_matrix(cur @ gens[lab])
            key = unitary_key(cur)
            if key in keys:
                ok = False
                break
            keys.add(key)
            frames.append(cur)
        if not ok:
            continue
        norm = np.linalg.norm(h_probe)
        if np.linalg.norm(project(frames, h_probe)) < tol * norm:
            solutions.append(SearchPath(tuple(walk), tuple(frames)))
    return solutions


def _no_smaller_subset_exists(graph: CayleyGraph, max_order: int) -> bool:
    """Exhaustively rule out identity-containing decoupling subsets of
    order <= max_order over the whole group.

    Works at the level of h_ec weight vectors: conjugation permutes the
    weights, so a subset decouples iff its weight vectors sum to zero.
    Distinct weight vectors number at most 30, which makes the exhaustive
    check over all multisets cheap.
    """
    classes: dict[tuple[float, ...], int] = {}
    for v in graph.vertices:
        perm, _ = conjugation_action(v.unitary)
        w = _ec_weight_vector(perm)
        classes[w] = classes.get(w, 0) + 1
    identity_w = tuple(_EC_WEIGHTS)
    class_items = list(classes.items())
    for size in range(2, max_order + 1):
        picks = size - 1   # identity is fixed
        for combo in combinations_with_replacement(range(len(class_items)), picks):
            counts: dict[int, int] = {}
            for c in combo:
                counts[c] = counts.get(c, 0) + 1
            # multiplicity bound; the identity consumes one slot of its class
            feasible = all(
                counts[c] <= class_items[c][1]
                - (1 if class_items[c][0] == identity_w else 0)
                for c in counts)
            if not feasible:
                continue
            total = np.array(identity_w)
            for c in combo:
                total = total + np.array(class_items[c][0])
            if np.abs(total).max() < 1e-9:
                return False
    return True


def find_minimal_subsets(graph: CayleyGraph | None = None,
                         h_probe: np.ndarray | None = None,
                         max_order: int = 6) -> SearchResult:
    """Exhaustive smallest-first search for decoupling frame sets.

    Walks the Cayley graph from the identity, smallest cardinality first;
    at the first order with solutions, groups them by initial pulse and
    selects per group the paths with the symmetric even-slot-repeat shape
    as the canonical family (two per initial pulse, mutually reversal-
    paired across the doublets).  The full census of solutions at that
    order is retained on the result.
    """
    if graph is None:
        graph = generate_group()
    if h_probe is None:
        h_probe, _ = probe_pair_hamiltonian()

    orders_empty = []
    for n_steps in range(1, max_order):
        sols = _enumerate_walks(graph, h_probe, n_steps)
        if sols:
            subsets = _group_solutions(sols)
            return SearchResult(
                subsets=subsets,
                census=tuple(sols),
                solution_order=n_steps + 1,
                orders_without_solutions=tuple(orders_empty),
                no_smaller_subset=_no_smaller_subset_exists(graph, n_steps),
                group_order=graph.order,
            )
        orders_empty.append(n_steps + 1)
    return SearchResult(subsets=(), census=(), solution_order=None,
                        orders_without_solutions=tuple(orders_empty),
                        no_smaller_subset=_no_smaller_subset_exists(
                            graph, max_order),
                        group_order=graph.order)


def _group_solutions(solutions: list[SearchPath]) -> tuple[DecouplingSubset, ...]:
    subsets = []
    for v0 in GENERATOR_LABELS:
        canonical = [p for p in solutions
                     if p.initial_pulse == v0 and p.is_canonical]
        if canonical:
            canonical.sort(key=lambda p: p.pulses)
            subsets.append(DecouplingSubset(v0, tuple(canonical)))
    return tuple(subsets)


# ---------------------------------------------------------------------------
# Z interleaving and the full-decoupling family


@dataclass(frozen=True, eq=False)
class ZenithSequence:
    """Eleven-pulse full-decoupling sequence with its provenance."""

    sequence: PulseSequence
    base_pulses: tuple[tuple[str, int], ...]
    phase_choices: tuple[int, ...]

    @property
    def label(self) -> str:
        return self.sequence.label


def _conj_axis_by_z_power(axis: str, sign: int, power: int) -> tuple[str, int]:
    for _ in range(power % 4):
        axis, s = Z_CONJ_AXIS[axis]
        sign *= s
    return axis, sign


def interleave_z(base_path, signs=None, z_signs=None,
                 label: str = "", validate: bool = True) -> ZenithSequence:
    """Upgrade a five-pulse h_ec solution to full dipolar decoupling.

    Emits [Z, P1', Z, P2', Z, P3', Z, P4', Z, P5', Z] over twelve equal
    intervals, where Pj' is the base pulse conjugated by Z^{-sum of z
    signs up to slot j} so that the toggling frames, reduced mod the
    accumulated z rotations, reproduce the base path exactly.  With unit
    z signs the odd-slot letters swap X,Xt <-> Y,Yt and the even-slot
    letters keep their letter with a sign flip.
    """
    base_labels = (base_path.pulses if isinstance(base_path, SearchPath)
                   else tuple(base_path))
    if signs is None:
        signs = (1,) * len(base_labels)
    if z_signs is None:
        z_signs = (1,) * (len(base_labels) + 1)
    if len(signs) != len(base_labels) or len(z_signs) != len(base_labels) + 1:
        raise ValueError("signs/z_signs length mismatch")

    if validate:
        h_ec, _ = probe_pair_hamiltonian()
        base_pulses = [Pulse(ax, sg) for ax, sg in zip(base_labels, signs)]
        res = np.linalg.norm(aht_zeroth(base_pulses, h_ec))
        if res > 1e-10 * np.linalg.norm(h_ec):
            raise ValueError(
                f"base path {base_labels} does not decouple the "
                f"energy-conserving probe (residual {res:.2e})")

    pulses = []
    sigma = 0
    for j, (ax, sg) in enumerate(zip(base_labels, signs), start=1):
        pulses.append(Pulse("Z", z_signs[j - 1]))
        sigma += z_signs[j - 1]
        new_ax, new_sg = _conj_axis_by_z_power(ax, sg, (-sigma) % 4)
        pulses.append(Pulse(new_ax, new_sg))
    pulses.append(Pulse("Z", z_signs[-1]))

    seq = PulseSequence(tuple(pulses), label=label or
                        ("zenith-" + "".join(base_labels)))
    return ZenithSequence(seq, tuple(zip(base_labels, signs)), tuple(signs))


def enumerate_family(phase_choices=None, search: SearchResult | None = None,
                     dedupe: bool = True) -> list[ZenithSequence]:
    """Eleven-pulse sequences from the canonical paths and sign choices.

    With ``phase_choices=None`` all 2^5 sign patterns are applied to each
    of the eight canonical base paths; passing an explicit sign tuple
    restricts to it.  Sequences whose twelve toggling frames coincide as a
    set are deduplicated.
    """
    if search is None:
        search = find_minimal_subsets()
    sign_patterns = (list(product((1, -1), repeat=5))
                     if phase_choices is None else [tuple(phase_choices)])
    out = []
    seen = set()
    for subset in search.subsets:
        for k, path in enumerate(subset.paths):
            for signs in sign_patterns:
                suffix = "" if len(sign_patterns) == 1 else (
                    "/" + "".join("p" if s > 0 else "m" for s in signs))
                zs = interleave_z(path, signs=signs,
                                  label=f"zenith-{subset.initial_pulse}"
                                        f"{'ab'[k]}{suffix}")
                if dedupe:
                    key = frozenset(unitary_key(f) for f in
                                    toggling_frames(zs.sequence.pulses))
                    if key in seen:
                        continue
                    seen.add(key)
                out.append(zs)
    return out


def z_train_only(seq: PulseSequence) -> PulseSequence:
    """The sequence with every non-Z pulse replaced by an identity slot.

    Isolates the balanced-Z backbone: its average preserves h_ec exactly
    and annihilates h_nc.
    """
    pulses = tuple(p if p.axis == "Z" else Pulse("I") for p in seq.pulses)
    return PulseSequence(pulses, label=seq.label + "+ztrain",
                         tau_ns=seq.tau_ns, pulse_ns=seq.pulse_ns)
