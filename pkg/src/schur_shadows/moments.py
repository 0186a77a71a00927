"""Exact moments of the shadow matrix, independent of any Monte Carlo path.

For a measured partition with rows lam_1 >= ... >= lam_k and a row-symmetric
state tau, the POVM outcome moments reduce to permutation averages: the Haar
expectation of psi^{tensor s} times the symmetric-subspace dimension kappa_s
equals the s-slot symmetrizer. Attaching one (or two) output qudits to a row
and symmetrizing the enlarged slot set therefore gives E[Psi] and
E[Psi tensor Psi] exactly, as partial traces of explicitly built operators on
n+1 (resp. n+2) qudits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .qudit import (
    CapExceededError,
    OperatorGrid,
    PureState,
    RngStream,
    apply_local_unitary,
    haar_pure_state_batch,
)
from .young import BoxLayout, Partition, kappa_product, row_group, symmetric_dim

#: Hard cap on d**(n+2) for explicit second-moment operators.
ORACLE_DIM_CAP = 2200

ROW_SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class SwapSpec:
    """Placement of output qudits swapped into rows of the diagram.

    ``targets`` holds (row, position) pairs with 0-based rows and 1-based
    positions; position ``lam_row + 1`` (or ``lam_row + 2`` for the ordered
    kind) denotes the identity overload where the output qudit stays put.
    """

    kind: str
    targets: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.kind not in ("single-output", "double-output", "ordered-double"):
            raise ValueError(f"unknown swap kind {self.kind!r}")
        want = 1 if self.kind == "single-output" else 2
        if len(self.targets) != want:
            raise ValueError(f"{self.kind} swap needs {want} targets")

    def validate(self, lam: Partition) -> None:
        extra = 2 if self.kind == "ordered-double" else 1
        for row, pos in self.targets:
            if not 0 <= row < lam.k:
                raise ValueError(f"row {row} outside partition {lam}")
            if not 1 <= pos <= lam.parts[row] + extra:
                raise ValueError(f"position {pos} outside row {row} of {lam} (+{extra})")
        if self.kind == "ordered-double":
            (r1, p1), (r2, p2) = self.targets
            if r1 != r2 or not p1 < p2:
                raise ValueError("ordered-double swap needs one row and p < p'")


# ---------------------------------------------------------------------------
# Permutation operators on the extended register
# ---------------------------------------------------------------------------


class _Register:
    """Digit bookkeeping for a d^m index space."""

    def __init__(self, d: int, m: int):
        self.d = d
        self.m = m
        self.dim = d**m
        idx = np.arange(self.dim)
        digits = np.empty((self.dim, m), dtype=np.int64)
        for pos in range(m - 1, -1, -1):
            digits[:, pos] = idx % d
            idx = idx // d
        self.digits = digits
        self.powers = d ** np.arange(m - 1, -1, -1)

    def perm_index_map(self, mapping) -> np.ndarray:
        """new_index[v] for the operator moving slot k to slot mapping[k]."""
        new_digits = np.empty_like(self.digits)
        for k, dst in enumerate(mapping):
            new_digits[:, dst] = self.digits[:, k]
        return new_digits @ self.powers

    def symmetrizer(self, slots) -> np.ndarray:
        """Dense average of permutation operators over the given slots."""
        slots = list(slots)
        mat = np.zeros((self.dim, self.dim))
        cols = np.arange(self.dim)
        count = 0
        for image in itertools.permutations(slots):
            mapping = list(range(self.m))
            for src, dst in zip(slots, image):
                mapping[src] = dst
            mat[self.perm_index_map(mapping), cols] += 1.0
            count += 1
        return mat / count

    def transposition_rows(self, a: int, b: int) -> np.ndarray:
        mapping = list(range(self.m))
        mapping[a], mapping[b] = b, a
        return self.perm_index_map(mapping)


def row_symmetric_projector(lam: Partition, d: int) -> np.ndarray:
    """Projector onto the row-symmetric subspace: the row-group average."""
    reg = _Register(d, lam.n)
    mat = np.zeros((reg.dim, reg.dim))
    cols = np.arange(reg.dim)
    count = 0
    for perm in row_group(lam):
        mat[reg.perm_index_map(perm.mapping), cols] += 1.0
        count += 1
    return mat / count


def row_symmetry_residual(lam: Partition, tau: PureState) -> float:
    proj = row_symmetric_projector(lam, tau.d)
    return float(np.linalg.norm(proj @ tau.amplitudes - tau.amplitudes))


def _check_protocol_state(lam: Partition, tau: PureState) -> None:
    if lam.n != tau.n:
        raise ValueError(f"partition of {lam.n} does not match {tau.n}-qudit state")
    tau.check_normalized(1e-8)
    residual = row_symmetry_residual(lam, tau)
    if residual > ROW_SYMMETRY_TOL:
        raise ValueError(
            f"state is outside the row-symmetric subspace of {lam} (residual {residual:.3e})"
        )


def _rotated_density(tau: PureState, unitary: OperatorGrid | None) -> np.ndarray:
    state = tau if unitary is None else apply_local_unitary(unitary, tau)
    return np.outer(state.amplitudes, state.amplitudes.conj())


# ---------------------------------------------------------------------------
# First moment
# ---------------------------------------------------------------------------


def expected_shadow_exact(
    lam: Partition, tau: PureState, unitary: OperatorGrid | None = None, validate: bool = True
) -> np.ndarray:
    """Exact E[Psi]: sum over rows and in-row swap positions of partial traces.

    The output qudit occupies slot 0 of an (n+1)-qudit register; for each row
    j and position p <= lam_j the swap pulls that qudit's reduced state onto
    the output, and the identity overload p = lam_j + 1 contributes I.
    """
    if validate:
        _check_protocol_state(lam, tau)
    d, n = tau.d, tau.n
    rho = _rotated_density(tau, unitary)
    reg = _Register(d, n + 1)
    layout = BoxLayout(lam)
    big = np.kron(np.eye(d, dtype=np.complex128), rho)
    out = np.zeros((d, d), dtype=np.complex128)
    for row in range(lam.k):
        for pos in range(1, lam.parts[row] + 2):
            spec = SwapSpec("single-output", ((row, pos),))
            spec.validate(lam)
            if pos == lam.parts[row] + 1:
                out += np.eye(d) * np.trace(rho)
                continue
            slot = 1 + layout.box_position(row, pos - 1)
            rows_map = reg.transposition_rows(0, slot)
            swapped = np.empty_like(big)
            swapped[rows_map, :] = big
            out += _trace_keep_leading(swapped, d, n + 1, 1)
    return out


def expected_shadow_formula(lam: Partition, weight, unitary: OperatorGrid | None, d: int) -> np.ndarray:
    """Closed form k*I + sum_i w_i U|i><i|U^dag for a weight-w protocol state."""
    mat = float(lam.k) * np.eye(d, dtype=np.complex128)
    u = np.eye(d, dtype=np.complex128) if unitary is None else unitary.entries
    for sym, count in enumerate(weight):
        if count:
            col = u[:, sym]
            mat += count * np.outer(col, col.conj())
    return mat


def _trace_keep_leading(matrix: np.ndarray, d: int, m: int, keep: int) -> np.ndarray:
    """Partial trace keeping the first ``keep`` qudits of an m-qudit operator."""
    dk = d**keep
    dr = d ** (m - keep)
    tensor = matrix.reshape(dk, dr, dk, dr)
    return np.einsum("arbr->ab", tensor)


# ---------------------------------------------------------------------------
# Second moment
# ---------------------------------------------------------------------------


def second_moment_exact(
    lam: Partition,
    tau: PureState,
    unitary: OperatorGrid | None = None,
    validate: bool = True,
    dim_cap: int = ORACLE_DIM_CAP,
    rows: str = "all",
) -> np.ndarray:
    """Exact E[Psi tensor Psi] as a d^2 x d^2 matrix.

    Output qudits occupy slots 0 and 1 of an (n+2)-qudit register. For every
    ordered row pair (j, j') the Haar expectation of the POVM element times
    psi_j (tensor) psi_j' factorizes into per-row symmetrizers over enlarged
    slot sets, with coefficient (lam_j + d)(lam_j' + d) times the ratio of
    symmetric-subspace dimensions before and after enlargement.

    ``rows`` selects which ordered pairs contribute: "all", "cross"
    (j != j' only), or "diagonal" (j == j' only).
    """
    if rows not in ("all", "cross", "diagonal"):
        raise ValueError(f"rows must be 'all', 'cross', or 'diagonal', not {rows!r}")
    if validate:
        _check_protocol_state(lam, tau)
    d, n = tau.d, tau.n
    if d ** (n + 2) > dim_cap:
        raise CapExceededError(f"d^(n+2) = {d ** (n + 2)} exceeds oracle cap {dim_cap}")
    rho = _rotated_density(tau, unitary)
    reg = _Register(d, n + 2)
    layout = BoxLayout(lam)
    big = np.kron(np.eye(d * d, dtype=np.complex128), rho)

    row_slots = [[2 + layout.box_position(r, c) for c in range(lam.parts[r])] for r in range(lam.k)]
    sym_cache: dict[frozenset, np.ndarray] = {}

    def symmetrizer(slots) -> np.ndarray:
        key = frozenset(slots)
        if key not in sym_cache:
            sym_cache[key] = reg.symmetrizer(slots)
        return sym_cache[key]

    total = np.zeros((d * d, d * d), dtype=np.complex128)
    for j in range(lam.k):
        for jp in range(lam.k):
            if rows == "cross" and j == jp:
                continue
            if rows == "diagonal" and j != jp:
                continue
            coeff = float((lam.parts[j] + d) * (lam.parts[jp] + d))
            weight_op = None
            for r in range(lam.k):
                slots = list(row_slots[r])
                extra = (1 if r == j else 0) + (1 if r == jp else 0)
                if r == j:
                    slots.append(0)
                if r == jp:
                    slots.append(1)
                if not extra and lam.parts[r] == 1:
                    continue  # single-box row without outputs: identity factor
                coeff *= symmetric_dim(lam.parts[r], d) / symmetric_dim(lam.parts[r] + extra, d)
                block = symmetrizer(slots)
                weight_op = block if weight_op is None else weight_op @ block
            term = big if weight_op is None else weight_op @ big
            total += coeff * _trace_keep_leading(term, d, n + 2, 2)
    return total


def variance_exact(
    lam: Partition,
    tau: PureState,
    unitary: OperatorGrid | None,
    observable: np.ndarray,
    validate: bool = True,
) -> float:
    """Var[tr(O Psi)] = tr((O tensor O) E[Psi x Psi]) - tr(O E[Psi])^2."""
    obs = np.asarray(observable, dtype=np.complex128)
    second = second_moment_exact(lam, tau, unitary, validate=validate)
    first = expected_shadow_exact(lam, tau, unitary, validate=False)
    raw = np.trace(np.kron(obs, obs) @ second) - np.trace(obs @ first) ** 2
    if abs(raw.imag) > 1e-8:
        raise ValueError(f"variance has non-negligible imaginary part {raw.imag}")
    return float(raw.real)


def single_row_variance_closed_form(observable: np.ndarray, p: int, q: int, d: int) -> float:
    """Closed-form Var[tr(O Psi)] for a single-row partition on the uniform
    superposition of arrangements of p zeros and q ones, at U = I.

    Requires a traceless Hermitian observable and d >= 2; cross-checked
    against :func:`variance_exact` and independent quadrature in the tests.
    """
    obs = np.asarray(observable, dtype=np.complex128)
    if d < 2 or obs.shape != (d, d):
        raise ValueError("observable must be d x d with d >= 2")
    if p < 0 or q < 0 or p + q < 1:
        raise ValueError("need p, q >= 0 with p + q >= 1")
    if abs(np.trace(obs)) > 1e-9:
        raise ValueError("closed form requires a traceless observable")
    n = p + q
    a = obs[0, 0].real
    b = obs[1, 1].real
    cross = float(np.abs(obs[0, 1]) ** 2)
    sq = obs @ obs
    alpha = sq[0, 0].real
    beta = sq[1, 1].real
    tr_sq = float(np.trace(sq).real)
    lead = (n + d) / (n + d + 1)
    tail = 1.0 / (n + d + 1)
    return lead * (
        tr_sq + 2 * p * alpha + 2 * q * beta + 2 * p * q * cross - p * a**2 - q * b**2
    ) - tail * (p**2 * a**2 + q**2 * b**2 + 2 * p * q * a * b)


# ---------------------------------------------------------------------------
# POVM completeness
# ---------------------------------------------------------------------------


def povm_completeness_residual(lam: Partition, d: int) -> float:
    """Max-abs gap between the product of per-row symmetrizers and the
    row-group average; both equal the POVM elements' Haar integral."""
    reg = _Register(d, lam.n)
    layout = BoxLayout(lam)
    product = None
    for block in layout.row_blocks():
        sym = reg.symmetrizer(block)
        product = sym if product is None else product @ sym
    direct = row_symmetric_projector(lam, d)
    return float(np.max(np.abs(product - direct)))


# ---------------------------------------------------------------------------
# Monte Carlo cross-checks
# ---------------------------------------------------------------------------


class _EntrywiseStats:
    """Streaming mean and per-entry Re/Im standard errors of complex arrays."""

    def __init__(self, shape):
        self.count = 0
        self.sum = np.zeros(shape, dtype=np.complex128)
        self.sum_sq_re = np.zeros(shape)
        self.sum_sq_im = np.zeros(shape)

    def add_batch(self, batch: np.ndarray) -> None:
        self.count += batch.shape[0]
        self.sum += batch.sum(axis=0)
        self.sum_sq_re += np.sum(batch.real**2, axis=0)
        self.sum_sq_im += np.sum(batch.imag**2, axis=0)

    @property
    def mean(self) -> np.ndarray:
        return self.sum / self.count

    def z_scores(self, target: np.ndarray) -> np.ndarray:
        """Max of the Re and Im z statistics per entry."""
        mean = self.mean
        var_re = np.maximum(self.sum_sq_re / self.count - mean.real**2, 0.0)
        var_im = np.maximum(self.sum_sq_im / self.count - mean.imag**2, 0.0)
        se_re = np.sqrt(var_re / self.count)
        se_im = np.sqrt(var_im / self.count)
        dev_re = np.abs(mean.real - target.real)
        dev_im = np.abs(mean.imag - target.imag)
        # Entries with (numerically) zero spread must match to float noise.
        z_re = np.where(se_re > 1e-12, dev_re / np.maximum(se_re, 1e-300), np.where(dev_re < 1e-9, 0.0, np.inf))
        z_im = np.where(se_im > 1e-12, dev_im / np.maximum(se_im, 1e-300), np.where(dev_im < 1e-9, 0.0, np.inf))
        return np.maximum(z_re, z_im)


def mc_povm_completeness(lam: Partition, d: int, samples: int, rng: RngStream, batch: int = 2000) -> dict:
    """Monte Carlo average of kappa-weighted POVM elements vs the projector.

    The sampled operator is kappa * |v><v| with v the product of per-row
    tensor powers; entrywise Re/Im second moments accumulate through matrix
    products of the elementwise-squared real/imaginary parts.
    """
    dim = d**lam.n
    kappa = float(kappa_product(lam, d))
    sum1 = np.zeros((dim, dim), dtype=np.complex128)
    sq_re = np.zeros((dim, dim))
    sq_im = np.zeros((dim, dim))
    gen = rng.gen
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        full = _product_state_batch(lam, d, b, gen) * np.sqrt(kappa)
        re, im = np.ascontiguousarray(full.real), np.ascontiguousarray(full.imag)
        sum1 += full.T @ full.conj()
        re2, im2, reim = re**2, im**2, re * im
        # x_uw = F_u conj(F_w): Re x = R_u R_w + I_u I_w, Im x = I_u R_w - R_u I_w.
        sq_re += re2.T @ re2 + 2.0 * (reim.T @ reim) + im2.T @ im2
        sq_im += im2.T @ re2 + re2.T @ im2 - 2.0 * (reim.T @ reim)
        done += b
    target = row_symmetric_projector(lam, d).astype(np.complex128)
    mean = sum1 / samples
    var_re = np.maximum(sq_re / samples - mean.real**2, 0.0)
    var_im = np.maximum(sq_im / samples - mean.imag**2, 0.0)
    se_re = np.sqrt(var_re / samples)
    se_im = np.sqrt(var_im / samples)
    dev_re = np.abs(mean.real - target.real)
    dev_im = np.abs(mean.imag - target.imag)
    z_re = np.where(se_re > 1e-12, dev_re / np.maximum(se_re, 1e-300), np.where(dev_re < 1e-9, 0.0, np.inf))
    z_im = np.where(se_im > 1e-12, dev_im / np.maximum(se_im, 1e-300), np.where(dev_im < 1e-9, 0.0, np.inf))
    z = np.maximum(z_re, z_im)
    return {
        "samples": samples,
        "entries": int(2 * dim * dim),
        "max_abs_z": float(np.max(z)),
        "max_abs_dev": float(np.max(np.abs(mean - target))),
    }


def _product_state_batch(lam: Partition, d: int, count: int, gen: np.random.Generator) -> np.ndarray:
    """Batch of tensor products psi_1^{x lam_1} x ... as (count, d^n) rows."""
    full = None
    for part in lam.parts:
        psi = haar_pure_state_batch(d, count, gen)
        prod = psi
        for _ in range(part - 1):
            prod = (prod[:, :, None] * psi[:, None, :]).reshape(count, -1)
        full = prod if full is None else (full[:, :, None] * prod[:, None, :]).reshape(count, -1)
    return full


def mc_shadow_moments(
    lam: Partition,
    tau: PureState,
    unitary: OperatorGrid | None,
    samples: int,
    rng: RngStream,
    second: bool = True,
    observable: np.ndarray | None = None,
) -> dict:
    """Sample the production POVM path and compare moments to the oracle.

    Returns entrywise max |z| for E[Psi] (and E[Psi x Psi] when ``second``),
    plus a variance z statistic for ``observable`` when given.
    """
    from .protocol import row_symmetric_sample_batch

    d = tau.d
    state = tau if unitary is None else apply_local_unitary(unitary, tau)
    psis, _trials = row_symmetric_sample_batch(lam, state, samples, rng)
    coeffs = np.array([part + d for part in lam.parts], dtype=np.float64)

    first_stats = _EntrywiseStats((d, d))
    second_stats = _EntrywiseStats((d * d, d * d)) if second else None
    values = np.empty(samples) if observable is not None else None
    obs = None if observable is None else np.asarray(observable, dtype=np.complex128)
    chunk = max(1, 20_000_000 // (16 * d**4))
    for start in range(0, samples, chunk):
        block = psis[start : start + chunk]
        # Psi per sample: sum_i (d + lam_i) |psi_i><psi_i|.
        shadows = np.einsum("i,sia,sib->sab", coeffs, block, block.conj())
        first_stats.add_batch(shadows)
        if second_stats is not None:
            b = shadows.shape[0]
            kron = np.einsum("sab,scd->sacbd", shadows, shadows).reshape(b, d * d, d * d)
            second_stats.add_batch(kron)
        if values is not None:
            values[start : start + block.shape[0]] = np.real(np.einsum("ab,sba->s", obs, shadows))

    exact_first = expected_shadow_exact(lam, tau, unitary)
    report = {
        "samples": samples,
        "first_moment_max_z": float(np.max(first_stats.z_scores(exact_first))),
        "first_moment_mean": first_stats.mean,
    }
    if second_stats is not None:
        exact_second = second_moment_exact(lam, tau, unitary)
        report["second_moment_max_z"] = float(np.max(second_stats.z_scores(exact_second)))
    if values is not None:
        sample_var = float(np.var(values))
        centred = values - values.mean()
        m2 = float(np.mean(centred**2))
        m4 = float(np.mean(centred**4))
        se_var = np.sqrt(max(m4 - m2**2, 0.0) / samples)
        exact_var = variance_exact(lam, tau, unitary, obs, validate=False)
        report["variance_mc"] = sample_var
        report["variance_exact"] = exact_var
        report["variance_z"] = float(abs(sample_var - exact_var) / max(se_var, 1e-300))
    return report


@dataclass
class MomentReport:
    """Exact-vs-Monte-Carlo comparison bundle for one partition instance."""

    lam: Partition
    d: int
    first_moment: np.ndarray
    second_moment: np.ndarray | None
    variance: float | None
    mc: dict

    def hermiticity_deviation(self) -> float:
        dev = float(np.max(np.abs(self.first_moment - self.first_moment.conj().T)))
        if self.second_moment is not None:
            dev = max(dev, float(np.max(np.abs(self.second_moment - self.second_moment.conj().T))))
        return dev

    def to_jsonable(self) -> dict:
        out = {
            "schema_version": 1,
            "partition": list(self.lam.parts),
            "d": self.d,
            "first_moment_re": self.first_moment.real.tolist(),
            "first_moment_im": self.first_moment.imag.tolist(),
            "hermiticity_deviation": self.hermiticity_deviation(),
            "mc": {k: v for k, v in self.mc.items() if not isinstance(v, np.ndarray)},
        }
        if self.second_moment is not None:
            out["second_moment_re"] = self.second_moment.real.tolist()
            out["second_moment_im"] = self.second_moment.imag.tolist()
        if self.variance is not None:
            out["variance"] = self.variance
        return out
