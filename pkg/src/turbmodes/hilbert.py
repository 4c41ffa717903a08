"""Discrete measurement bases: OAM index maps, MUB families, angular basis, SIC-POVMs.

All constructions are exact (entries are roots of unity over sqrt(d)) except the
SIC fiducial, which is found numerically and certified afterwards.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

NORM_TOL = 1e-12

SUPPORTED_MUB_DIMS = (2, 3, 4, 5, 6, 8)


class DimensionError(ValueError):
    """Dimension outside the supported range for the requested construction."""


class SicSearchError(RuntimeError):
    """Fiducial search exhausted its restart budget without converging."""

    def __init__(self, dim: int, best_residual: float, restarts: int):
        self.dim = dim
        self.best_residual = best_residual
        self.restarts = restarts
        super().__init__(
            f"SIC fiducial search failed for d={dim}: best residual "
            f"{best_residual:.3e} after {restarts} restarts"
        )


@dataclass(frozen=True)
class BasisVector:
    """A unit vector of complex amplitudes over logical indices j = 0..d-1."""

    dim: int
    coeffs: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.dim < 2:
            raise DimensionError(f"dim must be >= 2, got {self.dim}")
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if coeffs.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coefficients, got shape {coeffs.shape}")
        norm2 = float(np.sum(np.abs(coeffs) ** 2))
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"vector {self.label!r} is not normalized: |c|^2 = {norm2}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    def overlap(self, other: "BasisVector") -> complex:
        return complex(np.vdot(self.coeffs, other.coeffs))


@dataclass(frozen=True)
class ModeBasis:
    """A set of basis vectors: d orthonormal ones, or d^2 normalized ones for a SIC."""

    dim: int
    vectors: tuple[BasisVector, ...]
    kind: str  # "logical" | "mub" | "angular" | "sic"
    index: int | None = None  # MUB index within its family

    def __post_init__(self):
        object.__setattr__(self, "vectors", tuple(self.vectors))
        if self.kind not in ("logical", "mub", "angular", "sic"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        expected = self.dim**2 if self.kind == "sic" else self.dim
        if len(self.vectors) != expected:
            raise ValueError(
                f"{self.kind} basis in d={self.dim} needs {expected} vectors, "
                f"got {len(self.vectors)}"
            )
        if any(v.dim != self.dim for v in self.vectors):
            raise ValueError("mixed vector dimensions in basis")
        if self.kind != "sic":
            dev = np.abs(self.gram() - np.eye(self.dim)).max()
            if dev > NORM_TOL:
                raise ValueError(f"{self.kind} basis is not orthonormal (max dev {dev:.3e})")

    def matrix(self) -> np.ndarray:
        """Vectors as columns."""
        return np.column_stack([v.coeffs for v in self.vectors])

    def gram(self) -> np.ndarray:
        m = self.matrix()
        return m.conj().T @ m

    def __len__(self):
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    def __getitem__(self, i):
        return self.vectors[i]


@dataclass(frozen=True)
class MubFamily:
    """An ordered family of mutually unbiased bases; index 0 logical, 1 Fourier."""

    dim: int
    bases: tuple[ModeBasis, ...]
    complete: bool

    def __len__(self):
        return len(self.bases)

    def __iter__(self):
        return iter(self.bases)

    def __getitem__(self, i):
        return self.bases[i]


@dataclass(frozen=True)
class OamIndexMap:
    """Bijection between logical indices j = 0..d-1 and topological charges."""

    dim: int
    ells: tuple[int, ...]

    def ell_of(self, j: int) -> int:
        return self.ells[j]

    def j_of(self, ell: int) -> int:
        return self.ells.index(ell)


def logical_index_map(d: int) -> OamIndexMap:
    """Charges carried by the logical kets: symmetric around 0, excluding 0 for even d."""
    if d < 2:
        raise DimensionError(f"dim must be >= 2, got {d}")
    if d % 2 == 0:
        ells = list(range(-d // 2, 0)) + list(range(1, d // 2 + 1))
    else:
        ells = list(range(-(d - 1) // 2, (d - 1) // 2 + 1))
    return OamIndexMap(dim=d, ells=tuple(ells))


def build_logical_basis(d: int) -> ModeBasis:
    eye = np.eye(d, dtype=complex)
    vecs = [BasisVector(d, eye[:, j], label=f"OAM:v{j}") for j in range(d)]
    return ModeBasis(dim=d, vectors=tuple(vecs), kind="logical")


def build_angular_basis(d: int) -> ModeBasis:
    """Discrete Fourier conjugate of the logical basis."""
    if d < 2:
        raise DimensionError(f"dim must be >= 2, got {d}")
    j = np.arange(d)
    vecs = []
    for k in range(d):
        coeffs = np.exp(2j * np.pi * j * k / d) / math.sqrt(d)
        vecs.append(BasisVector(d, coeffs, label=f"ANG:v{k}"))
    return ModeBasis(dim=d, vectors=tuple(vecs), kind="angular")


# ---------------------------------------------------------------------------
# MUB families.  Odd prime d: Wootters-Fields, basis a has vector components
# omega^(a j^2 + k j)/sqrt(d).  d = 2^m: Galois-ring GR(4, m) construction with
# entries i^tr((a+2b)x)/sqrt(d); for m = 1 this reduces to the Pauli eigenbases.
# ---------------------------------------------------------------------------

_BINARY_PRIMITIVE = {  # coefficients below the leading term of a primitive GF(2) polynomial
    2: [1],
    4: [1, 1],
    8: [1, 1, 0],
    16: [1, 1, 0, 0],
}


def _poly_mulmod(a: list[int], b: list[int], h: list[int]) -> list[int]:
    """Product of polynomials over Z4 reduced mod the monic polynomial h."""
    m = len(h) - 1
    prod = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                prod[i + j] = (prod[i + j] + ai * bj) % 4
    while len(prod) > m:
        lead = prod.pop()
        if lead:
            shift = len(prod) - m
            for i in range(m):
                prod[shift + i] = (prod[shift + i] - lead * h[i]) % 4
    prod += [0] * (m - len(prod))
    return prod


def _poly_powmod(a: list[int], e: int, h: list[int]) -> list[int]:
    m = len(h) - 1
    r = [1] + [0] * (m - 1)
    b = list(a)
    while e:
        if e & 1:
            r = _poly_mulmod(r, b, h)
        b = _poly_mulmod(b, b, h)
        e >>= 1
    return r


def _basic_primitive_poly(d: int) -> list[int]:
    """Hensel lift to Z4 of a binary primitive polynomial, chosen so that the
    class of x has multiplicative order d-1 (a basic primitive polynomial)."""
    base = _BINARY_PRIMITIVE[d]
    m = len(base)
    one = [1] + [0] * (m - 1)
    x = [0, 1] + [0] * (m - 2)
    for deltas in itertools.product([0, 2], repeat=m):
        h = [(base[i] + deltas[i]) % 4 for i in range(m)] + [1]
        if _poly_powmod(x, d - 1, h) != one:
            continue
        if all(
            _poly_powmod(x, e, h) != one
            for e in range(1, d - 1)
            if (d - 1) % e == 0
        ):
            return h
    raise RuntimeError(f"no basic primitive polynomial found for d={d}")


def _galois_ring_mubs(d: int) -> list[np.ndarray]:
    """d+1 MUBs for d = 2^m as column-stacked unitaries, standard basis first."""
    m = d.bit_length() - 1
    if m == 1:
        h = [3, 1]  # GR(4,1) = Z4 itself
        teich = [[0], [1]]
    else:
        h = _basic_primitive_poly(d)
        x = [0, 1] + [0] * (m - 2)
        teich = [[0] * m, [1] + [0] * (m - 1)]
        cur = list(x)
        for _ in range(d - 2):
            teich.append(list(cur))
            cur = _poly_mulmod(cur, x, h)

    t_by_residue = {tuple(c % 2 for c in t): t for t in teich}

    def mul(a, b):
        return _poly_mulmod(a, b, h)

    def frobenius(r):
        # 2-adic split r = a + 2b with a, b Teichmuller; Frobenius is a^2 + 2 b^2
        a = t_by_residue[tuple(c % 2 for c in r)]
        carry = [((rc - ac) % 4) // 2 % 2 for rc, ac in zip(r, a)]
        b = t_by_residue[tuple(carry)]
        aa, bb = mul(a, a), mul(b, b)
        return [(x1 + 2 * x2) % 4 for x1, x2 in zip(aa, bb)]

    def trace(r) -> int:
        s = [0] * len(r)
        cur = list(r)
        for _ in range(m):
            s = [(x1 + x2) % 4 for x1, x2 in zip(s, cur)]
            cur = frobenius(cur)
        if any(s[1:]):
            raise AssertionError("Galois-ring trace did not land in Z4")
        return s[0]

    bases = [np.eye(d, dtype=complex)]
    for a in teich:
        cols = np.empty((d, d), dtype=complex)
        for bi, b in enumerate(teich):
            shift = [(ac + 2 * bc) % 4 for ac, bc in zip(a, b)]
            for xi, x in enumerate(teich):
                cols[xi, bi] = 1j ** trace(mul(shift, x))
        bases.append(cols / math.sqrt(d))
    return bases


def _wootters_fields_mubs(d: int) -> list[np.ndarray]:
    """d+1 MUBs for odd prime d; basis a=0 is the Fourier basis."""
    omega = np.exp(2j * np.pi / d)
    j = np.arange(d)
    bases = [np.eye(d, dtype=complex)]
    for a in range(d):
        cols = np.empty((d, d), dtype=complex)
        for k in range(d):
            cols[:, k] = omega ** ((a * j * j + k * j) % d)
        bases.append(cols / math.sqrt(d))
    return bases


def _is_odd_prime(d: int) -> bool:
    if d < 3 or d % 2 == 0:
        return False
    return all(d % p for p in range(3, int(math.isqrt(d)) + 1, 2))


def build_mub_family(d: int) -> MubFamily:
    """Full d+1 family for prime-power d; for d=6 only {logical, angular}, flagged partial."""
    if d == 6:
        bases = (build_logical_basis(6), build_angular_basis(6))
        return MubFamily(dim=6, bases=bases, complete=False)
    if d in _BINARY_PRIMITIVE:
        matrices = _galois_ring_mubs(d)
    elif _is_odd_prime(d):
        matrices = _wootters_fields_mubs(d)
    else:
        raise DimensionError(
            f"no MUB construction for d={d}; supported: {SUPPORTED_MUB_DIMS} "
            "plus odd primes and powers of two up to 16"
        )
    bases = [build_logical_basis(d)]
    for a, mat in enumerate(matrices[1:]):
        vecs = tuple(
            BasisVector(d, mat[:, k], label=f"MUB{a + 1}:v{k}") for k in range(d)
        )
        bases.append(ModeBasis(dim=d, vectors=vecs, kind="mub", index=a + 1))
    return MubFamily(dim=d, bases=tuple(bases), complete=True)


# ---------------------------------------------------------------------------
# Weyl-Heisenberg displacements and SIC-POVMs.
# ---------------------------------------------------------------------------


def displacement_operator(d: int, k: int, j: int) -> np.ndarray:
    """Shift-by-k, phase-by-j displacement: D[(m+k) mod d, m] = omega^(j m)."""
    if d < 2:
        raise DimensionError(f"dim must be >= 2, got {d}")
    if not (0 <= k < d and 0 <= j < d):
        raise IndexError(f"displacement indices (k={k}, j={j}) out of range for d={d}")
    omega = np.exp(2j * np.pi / d)
    m = np.arange(d)
    out = np.zeros((d, d), dtype=complex)
    out[(m + k) % d, m] = omega ** ((j * m) % d)
    return out


def _displacement_stack(d: int) -> np.ndarray:
    return np.array(
        [displacement_operator(d, k, j) for k in range(d) for j in range(d)]
    )


def _canonical_phase(coeffs: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the first nonzero coefficient is real non-negative."""
    idx = np.flatnonzero(np.abs(coeffs) > 1e-14)
    if idx.size == 0:
        return coeffs
    pivot = coeffs[idx[0]]
    return coeffs * (abs(pivot) / pivot)


def _sic_residuals(v: np.ndarray, ops: np.ndarray, d: int) -> np.ndarray:
    phi = v[:d] + 1j * v[d:]
    phi = phi / np.linalg.norm(phi)
    shifted = ops[1:] @ phi
    overlaps = np.abs(shifted.conj() @ phi) ** 2
    return overlaps - 1.0 / (d + 1)


def find_sic_fiducial(
    d: int,
    seed: int = 0,
    tol: float = 1e-8,
    restarts: int = 64,
    cache_path: str | os.PathLike | None = None,
) -> BasisVector:
    """Search for a fiducial whose displacement orbit is equiangular.

    Random restarts of an L-BFGS descent on the summed squared deviation of the
    orbit overlaps from 1/(d+1), polished by a least-squares solve.  The result
    with the smallest residual wins, ties broken by the earliest restart, so the
    outcome is deterministic for a given seed.  With `cache_path` set, a result
    keyed by (d, seed, tol) is reused across runs.
    """
    if d < 2:
        raise DimensionError(f"dim must be >= 2, got {d}")
    if tol <= 0:
        raise ValueError("tol must be positive")

    cache_key = f"d={d},seed={seed},tol={tol:g}"
    if cache_path is not None and os.path.exists(cache_path):
        with open(cache_path) as fh:
            cache = json.load(fh)
        if cache_key in cache:
            coeffs = np.array([complex(re, im) for re, im in cache[cache_key]])
            return BasisVector(d, coeffs, label=f"SIC-fiducial:d{d}")

    ops = _displacement_stack(d)
    rng = np.random.default_rng(seed)
    best: tuple[float, np.ndarray] | None = None
    for _ in range(restarts):
        v0 = rng.standard_normal(2 * d)
        res = minimize(
            lambda v: float(np.sum(_sic_residuals(v, ops, d) ** 2)),
            v0,
            method="L-BFGS-B",
            options={"maxiter": 2000, "ftol": 1e-16, "gtol": 1e-12},
        )
        polished = least_squares(
            _sic_residuals,
            res.x,
            args=(ops, d),
            method="trf",
            xtol=3e-16,
            ftol=3e-16,
            gtol=3e-16,
        )
        residual = float(np.max(np.abs(_sic_residuals(polished.x, ops, d))))
        if best is None or residual < best[0]:
            best = (residual, polished.x)
        if residual <= 1e-12:
            break

    assert best is not None
    residual, v = best
    if residual > tol:
        raise SicSearchError(d, residual, restarts)

    phi = v[:d] + 1j * v[d:]
    phi = _canonical_phase(phi / np.linalg.norm(phi))
    # renormalize exactly after the phase rotation
    phi = phi / np.linalg.norm(phi)
    fiducial = BasisVector(d, phi, label=f"SIC-fiducial:d{d}")

    if cache_path is not None:
        cache = {}
        if os.path.exists(cache_path):
            with open(cache_path) as fh:
                cache = json.load(fh)
        cache[cache_key] = [[float(c.real), float(c.imag)] for c in phi]
        os.makedirs(os.path.dirname(os.path.abspath(cache_path)), exist_ok=True)
        with open(cache_path, "w") as fh:
            json.dump(cache, fh, indent=1, sort_keys=True)
    return fiducial


def build_sic_povm(d: int, fiducial: BasisVector) -> ModeBasis:
    """All d^2 displaced copies of the fiducial, labeled by (k, j)."""
    if fiducial.dim != d:
        raise ValueError(f"fiducial has dim {fiducial.dim}, expected {d}")
    norm2 = float(np.sum(np.abs(fiducial.coeffs) ** 2))
    if abs(norm2 - 1.0) > NORM_TOL:
        raise ValueError("fiducial is not unit-norm")
    vecs = []
    for k in range(d):
        for j in range(d):
            c = displacement_operator(d, k, j) @ fiducial.coeffs
            c = c / np.linalg.norm(c)
            vecs.append(BasisVector(d, c, label=f"SIC:({k},{j})"))
    return ModeBasis(dim=d, vectors=tuple(vecs), kind="sic")


# ---------------------------------------------------------------------------
# Certification.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MubCertification:
    dim: int
    n_bases: int
    max_orthonormality_dev: float
    max_unbiasedness_dev: float
    worst_pair: tuple[str, str]
    tol: float
    passed: bool


@dataclass(frozen=True)
class SicCertification:
    dim: int
    max_equiangularity_dev: float
    identity_residual: float
    worst_pair: tuple[str, str]
    tol: float
    passed: bool


def certify_mub(family, tol: float) -> MubCertification:
    """Check within-basis orthonormality and pairwise 1/d cross-basis overlaps."""
    bases = list(family)
    dims = {b.dim for b in bases}
    if len(dims) != 1:
        raise ValueError(f"mixed dimensions in family: {sorted(dims)}")
    d = dims.pop()

    orth_dev = 0.0
    for b in bases:
        orth_dev = max(orth_dev, float(np.abs(b.gram() - np.eye(d)).max()))

    unb_dev = 0.0
    worst = (bases[0][0].label, bases[0][0].label)
    for a, b in itertools.combinations(bases, 2):
        cross = np.abs(a.matrix().conj().T @ b.matrix()) ** 2
        dev = np.abs(cross - 1.0 / d)
        i, j = np.unravel_index(np.argmax(dev), dev.shape)
        if dev[i, j] > unb_dev:
            unb_dev = float(dev[i, j])
            worst = (a[i].label, b[j].label)
    return MubCertification(
        dim=d,
        n_bases=len(bases),
        max_orthonormality_dev=orth_dev,
        max_unbiasedness_dev=unb_dev,
        worst_pair=worst,
        tol=tol,
        passed=orth_dev <= tol and unb_dev <= tol,
    )


def certify_sic(basis: ModeBasis, tol: float) -> SicCertification:
    """Check equiangularity at 1/(d+1) and resolution of the identity."""
    if basis.kind != "sic":
        raise ValueError(f"expected a sic basis, got kind {basis.kind!r}")
    d = basis.dim
    m = basis.matrix()  # d x d^2
    overlaps = np.abs(m.conj().T @ m) ** 2
    dev = np.abs(overlaps - 1.0 / (d + 1))
    np.fill_diagonal(dev, 0.0)
    i, j = np.unravel_index(np.argmax(dev), dev.shape)
    max_dev = float(dev[i, j])

    resolution = (m @ m.conj().T) / d
    identity_residual = float(np.abs(resolution - np.eye(d)).max())
    return SicCertification(
        dim=d,
        max_equiangularity_dev=max_dev,
        identity_residual=identity_residual,
        worst_pair=(basis[i].label, basis[j].label),
        tol=tol,
        passed=max_dev <= tol and identity_residual <= tol,
    )


# ---------------------------------------------------------------------------
# JSON import/export.  Schema: {"dim": d, "kind": str, "index": int|null,
# "vectors": [{"label": str, "coeffs": [[re, im], ...]}, ...]}
# ---------------------------------------------------------------------------


def basis_to_json(basis: ModeBasis) -> dict:
    return {
        "dim": basis.dim,
        "kind": basis.kind,
        "index": basis.index,
        "vectors": [
            {
                "label": v.label,
                "coeffs": [
                    [float(c.real), float(c.imag)]
                    for c in _canonical_phase(np.asarray(v.coeffs))
                ],
            }
            for v in basis.vectors
        ],
    }


def basis_from_json(payload: dict) -> ModeBasis:
    vecs = tuple(
        BasisVector(
            payload["dim"],
            np.array([complex(re, im) for re, im in entry["coeffs"]]),
            label=entry.get("label", ""),
        )
        for entry in payload["vectors"]
    )
    return ModeBasis(
        dim=payload["dim"],
        vectors=vecs,
        kind=payload["kind"],
        index=payload.get("index"),
    )
