"""Regularized contact coupling and the semiclassical gap tail above the cutoff."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bdg import RadialField, fermi_occupation

TWO_PI2 = 2.0 * math.pi**2

# k = k_c / t on t in [1/K_BIG_RATIO, 1]; beyond k_big the tail is added analytically
K_BIG_RATIO = 40.0
TAIL_NODES = 200
_T_NODES, _T_WEIGHTS = np.polynomial.legendre.leggauss(TAIL_NODES)
_T_LO = 1.0 / K_BIG_RATIO
_T = 0.5 * (1.0 - _T_LO) * _T_NODES + 0.5 * (1.0 + _T_LO)
_TW = 0.5 * (1.0 - _T_LO) * _T_WEIGHTS


class RegularizationError(ValueError):
    pass


@dataclass(frozen=True)
class LocalMomenta:
    k_fermi: np.ndarray
    k_cut: np.ndarray
    potential: np.ndarray
    mu_avg: float
    dmu: float
    cutoff_Ec: float


def trap_potential(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return 0.5 * r * r


def local_momenta(r, mu_up: float, mu_down: float, cutoff_Ec: float) -> LocalMomenta:
    """k_F(r) = sqrt(2(mu - V)) and k_c(r) = sqrt(2(E_c - V)), zero where negative."""
    V = trap_potential(r)
    mu = 0.5 * (mu_up + mu_down)
    kf = np.sqrt(2.0 * np.clip(mu - V, 0.0, None))
    kc = np.sqrt(2.0 * np.clip(cutoff_Ec - V, 0.0, None))
    return LocalMomenta(kf, kc, V, mu, 0.5 * (mu_up - mu_down), float(cutoff_Ec))


def regularized_coupling(momenta: LocalMomenta, U: float) -> RadialField:
    """Utilde(r) from

        1/Utilde = 1/U + (1/2pi^2) [ (k_F/2) ln((k_c + k_F)/(k_c - k_F)) - k_c ]

    ``U = inf`` (either sign) gives the unitary limit. Where k_c = 0 the bare
    coupling is returned.
    """
    kf, kc = momenta.k_fermi, momenta.k_cut
    if U == 0:
        return RadialField(np.zeros_like(kc), "coupling")
    inside = kc > 0
    if np.any(inside & (kc <= kf)):
        raise RegularizationError(
            f"k_c <= k_F somewhere: cutoff {momenta.cutoff_Ec} too small for mu={momenta.mu_avg:.6g}"
        )
    inv_u = 0.0 if math.isinf(U) else 1.0 / U
    log_term = np.zeros_like(kc)
    m = inside & (kf > 0)
    log_term[m] = 0.5 * kf[m] * np.log((kc[m] + kf[m]) / (kc[m] - kf[m]))
    inv = inv_u + (log_term - kc) / TWO_PI2
    out = np.where(inside, 1.0 / np.where(inv == 0, np.nan, inv), U)
    if np.any(~np.isfinite(out)):
        raise RegularizationError("regularized coupling diverges on the grid")
    return RadialField(out, "coupling")


def _tail_integrand(k, delta, V, mu, dmu, T):
    """k^2/(2pi^2) [ D/(2E) (1 - f(E - dmu) - f(E + dmu)) - D/(2 xi) ], xi = eps - mu."""
    xi = 0.5 * k * k + V - mu
    E = np.sqrt(xi * xi + delta * delta)
    occ = 1.0 - fermi_occupation(E - dmu, T) - fermi_occupation(E + dmu, T)
    # D/(2E) - D/(2 xi) written without cancellation
    diff = -delta**3 / (2.0 * E * xi * (E + xi))
    body = diff - delta / (2.0 * E) * (1.0 - occ)
    return k * k / TWO_PI2 * body


def lda_gap_tail(pairing, momenta: LocalMomenta, U: float, T: float) -> RadialField:
    """Semiclassical pairing contribution of momenta above the local cutoff k_c(r).

    Delta_LDA(r) = -U int_{k_c}^inf dk k^2/(2pi^2) [ Delta/(2E)(1 - f(E_dn) - f(E_up))
                                                     - Delta/(2(eps - mu)) ]

    with E_dn,up = E -/+ dmu. The range k_c..40 k_c is done by Gauss-Legendre in
    t = k_c/k; beyond that the leading large-k integrand -Delta^3/(pi^2 k^4) is
    integrated in closed form.
    """
    delta = np.asarray(pairing, dtype=float)
    kc = momenta.k_cut
    out = np.zeros_like(delta)
    if U == 0 or math.isinf(U):
        if math.isinf(U):
            raise RegularizationError("the LDA tail needs a finite bare coupling")
        return RadialField(out, "pairing")
    active = (kc > 0) & (delta != 0)
    if not np.any(active):
        return RadialField(out, "pairing")
    d = delta[active][:, None]
    kca = kc[active][:, None]
    V = momenta.potential[active][:, None]
    xi_c = 0.5 * kca * kca + V - momenta.mu_avg
    if np.any(xi_c <= 0):
        raise RegularizationError("eps - mu must stay positive above the cutoff (E_c <= mu?)")
    k = kca / _T[None, :]
    vals = _tail_integrand(k, d, V, momenta.mu_avg, momenta.dmu, T)
    body = (vals * kca / _T[None, :] ** 2) @ _TW
    k_big = K_BIG_RATIO * kc[active]
    # k^2/(2pi^2) * (-Delta^3/(4 xi^3)) with xi ~ k^2/2  ->  -Delta^3 / (pi^2 k^4)
    tail = -delta[active] ** 3 / (3.0 * math.pi**2 * k_big**3)
    out[active] = -U * (body + tail)
    return RadialField(out, "pairing")


def hybrid_gap(bdg_part, lda_part) -> RadialField:
    a = np.asarray(bdg_part, dtype=float)
    b = np.asarray(lda_part, dtype=float)
    if a.shape != b.shape:
        raise ValueError("fields are not on the same grid")
    return RadialField(a + b, "pairing")
