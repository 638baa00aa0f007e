"""Nonsymmetric Voigt algebra and hyperelastic material kernels.

All second-order tensors are flattened row-major into 9-vectors with the
ordering ``[11, 12, 13, 21, 22, 23, 31, 32, 33]``; fourth-order tangents
``A_{iJkL} = dP_{iJ}/dF_{kL}`` become 9x9 matrices with the same ordering
on rows and columns. Every kernel accepts a batch of shape ``(..., 9)``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NonPositiveJacobian

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
_I3 = np.eye(3)


def voigt_index(i, j):
    return 3 * i + j


def voigt_encode(T):
    """3x3 tensor(s) -> 9-vector(s)."""
    T = np.asarray(T, dtype=float)
    return T.reshape(T.shape[:-2] + (9,)).copy()


def voigt_decode(v):
    """9-vector(s) -> 3x3 tensor(s)."""
    v = np.asarray(v, dtype=float)
    return v.reshape(v.shape[:-1] + (3, 3)).copy()


@dataclass(frozen=True)
class Material:
    """Isotropic hyperelastic material.

    ``kind`` is ``"neo-hooke"`` (compressible, stored energy
    ``mu/2 (tr C - 3) - mu ln J + lam/2 (ln J)^2``) or ``"linear-elastic"``
    (``P = C : (F - I)`` with constant isotropic ``C``).
    """

    kind: str = "neo-hooke"
    E: float = 1000.0
    nu: float = 0.25

    def __post_init__(self):
        if self.kind not in ("neo-hooke", "linear-elastic"):
            raise ConfigError(f"unknown material kind {self.kind!r}")
        if not self.E > 0:
            raise ConfigError("E must be positive")
        if not -1.0 < self.nu < 0.5:
            raise ConfigError("nu must lie in (-1, 0.5)")

    @property
    def lam(self):
        return self.E * self.nu / ((1 + self.nu) * (1 - 2 * self.nu))

    @property
    def mu(self):
        return self.E / (2 * (1 + self.nu))

    def energy(self, F):
        return stored_energy(self, F)

    def stress(self, F):
        return pk1_stress(self, F)

    def tangent(self, F):
        return nominal_tangent(self, F)

    def evaluate(self, F):
        """Return ``(P, A)`` at ``F`` sharing one inversion."""
        return _evaluate(self, F, want_tangent=True)


class CountingMaterial:
    """Delegating wrapper that counts material point evaluations.

    ``n_evals`` is the number of strain points at which stress was
    requested (a batch of m points counts m).
    """

    def __init__(self, material):
        self.material = material
        self.n_evals = 0

    def __getattr__(self, name):
        return getattr(self.material, name)

    def _count(self, F):
        self.n_evals += int(np.prod(np.shape(F)[:-1], dtype=int))

    def stress(self, F):
        self._count(F)
        return self.material.stress(F)

    def tangent(self, F):
        self._count(F)
        return self.material.tangent(F)

    def evaluate(self, F):
        self._count(F)
        return self.material.evaluate(F)

    def reset(self):
        self.n_evals = 0


def _kinematics(F):
    Ft = voigt_decode(F)
    J = np.linalg.det(Ft)
    if np.any(~(J > 0)):
        bad = np.flatnonzero(~(np.atleast_1d(J) > 0))
        raise NonPositiveJacobian(f"det F <= 0 at {bad.size} point(s)", index=bad)
    Finv = np.linalg.inv(Ft)
    return Ft, J, Finv


def _linear_tangent(mat):
    lam, mu = mat.lam, mat.mu
    A = (lam * np.einsum("ij,kl->ijkl", _I3, _I3)
         + mu * (np.einsum("ik,jl->ijkl", _I3, _I3) + np.einsum("il,jk->ijkl", _I3, _I3)))
    return A.reshape(9, 9)


def _evaluate(mat, F, want_tangent):
    F = np.asarray(F, dtype=float)
    Ft, J, Finv = _kinematics(F)
    lam, mu = mat.lam, mat.mu
    if mat.kind == "linear-elastic":
        C = _linear_tangent(mat)
        P = (F - IDENTITY) @ C.T
        if not want_tangent:
            return P
        return P, np.broadcast_to(C, F.shape[:-1] + (9, 9)).copy()

    lnJ = np.log(J)
    FinvT = np.swapaxes(Finv, -1, -2)
    P = mu * (Ft - FinvT) + (lam * lnJ)[..., None, None] * FinvT
    P = voigt_encode(P)
    if not want_tangent:
        return P
    # A_iJkL = mu d_ik d_JL + (mu - lam lnJ) Finv_Li Finv_Jk + lam Finv_Ji Finv_Lk
    coef = (mu - lam * lnJ)[..., None, None, None, None]
    A = (mu * np.einsum("ik,jl->ijkl", _I3, _I3)
         + coef * np.einsum("...li,...jk->...ijkl", Finv, Finv)
         + lam * np.einsum("...ji,...lk->...ijkl", Finv, Finv))
    return P, A.reshape(F.shape[:-1] + (9, 9))


def stored_energy(mat, F):
    F = np.asarray(F, dtype=float)
    if mat.kind == "linear-elastic":
        H = F - IDENTITY
        return 0.5 * np.einsum("...i,ij,...j->...", H, _linear_tangent(mat), H)
    _, J, _ = _kinematics(F)
    lnJ = np.log(J)
    trC = np.einsum("...i,...i->...", F, F)
    return 0.5 * mat.mu * (trC - 3.0) - mat.mu * lnJ + 0.5 * mat.lam * lnJ**2


def pk1_stress(mat, F):
    """First Piola-Kirchhoff stress ``P = dW/dF`` in Voigt form."""
    return _evaluate(mat, F, want_tangent=False)


def nominal_tangent(mat, F):
    """Nominal stiffness ``A = dP/dF`` as a 9x9 Voigt matrix."""
    return _evaluate(mat, F, want_tangent=True)[1]


def cauchy_stress(P, F):
    """sigma = P F^T / J, both in Voigt form."""
    Pt, Ft = voigt_decode(P), voigt_decode(F)
    J = np.linalg.det(Ft)
    return voigt_encode(Pt @ np.swapaxes(Ft, -1, -2) / J[..., None, None])


def von_mises(sigma):
    s = voigt_decode(sigma)
    s = 0.5 * (s + np.swapaxes(s, -1, -2))
    dev = s - np.trace(s, axis1=-2, axis2=-1)[..., None, None] * _I3 / 3.0
    return np.sqrt(1.5 * np.einsum("...ij,...ij->...", dev, dev))
