"""Closed-form CFT constants attached to radial SLE with parameter kappa.

Everything here is plain double-precision arithmetic; the functions are
pure and safe to call from any worker.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "DomainError",
    "SleParameterSet",
    "CoulombChargeSet",
    "ExponentBundle",
    "SpinDimension",
    "central_charge",
    "weight_rs",
    "sle_parameters",
    "coulomb_charges",
    "exponent_bundle",
    "delta_pm",
    "decay_exponent",
    "eigenvalue_eps",
    "charge_balance",
    "fusion_dimension",
]


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a formula."""


def _check_kappa(kappa: float) -> float:
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa <= 0.0:
        raise DomainError(f"kappa must be positive and finite, got {kappa!r}")
    return kappa


def central_charge(kappa: float) -> float:
    """c = 1 - 6 (kappa - 4)^2 / (4 kappa)."""
    kappa = _check_kappa(kappa)
    return 1.0 - 6.0 * (kappa - 4.0) ** 2 / (4.0 * kappa)


def weight_rs(kappa: float, r: float, s: float) -> float:
    """Kac weight h_{r;s} = [(r kappa - 4 s)^2 - (kappa - 4)^2] / (16 kappa)."""
    kappa = _check_kappa(kappa)
    return ((r * kappa - 4.0 * s) ** 2 - (kappa - 4.0) ** 2) / (16.0 * kappa)


@dataclass(frozen=True)
class SleParameterSet:
    kappa: float
    c: float
    h12: float
    h0half2: float  # the combination 2 h_{0;1/2}

    def as_dict(self) -> dict:
        return {"kappa": self.kappa, "c": self.c, "h12": self.h12, "h0half2": self.h0half2}


def sle_parameters(kappa: float) -> SleParameterSet:
    kappa = _check_kappa(kappa)
    return SleParameterSet(
        kappa=kappa,
        c=central_charge(kappa),
        h12=(6.0 - kappa) / (2.0 * kappa),
        h0half2=(6.0 - kappa) * (kappa - 2.0) / (8.0 * kappa),
    )


@dataclass(frozen=True)
class CoulombChargeSet:
    """Coulomb gas charges; the background charge is 2*alpha0."""

    kappa: float
    alpha_plus: float
    alpha_minus: float
    alpha0: float
    beta_kappa: float

    @property
    def central_charge(self) -> float:
        return 1.0 - 12.0 * self.alpha0**2

    def weight_of_charge(self, alpha: float) -> float:
        return 0.5 * alpha * (alpha - 2.0 * self.alpha0)

    def alpha_rs(self, r: float, s: float) -> float:
        return self.alpha0 - 0.5 * r * self.alpha_plus - 0.5 * s * self.alpha_minus

    def charge_of_weight(self, h: float, branch: str = "upper") -> float:
        """Solve h = alpha (alpha - 2 alpha0) / 2 for alpha.

        ``branch="upper"`` returns the root with alpha > alpha0 (the default
        representation of a boundary field), ``"lower"`` the reflected root
        2*alpha0 - alpha, ``"both"`` the pair (upper, lower).
        """
        disc = self.alpha0**2 + 2.0 * h
        if disc < 0.0:
            raise DomainError(f"weight {h} is below the minimum {-0.5 * self.alpha0**2}")
        root = math.sqrt(disc)
        upper, lower = self.alpha0 + root, self.alpha0 - root
        if branch == "upper":
            return upper
        if branch == "lower":
            return lower
        if branch == "both":
            return upper, lower
        raise ValueError(f"unknown branch {branch!r}")

    def as_dict(self) -> dict:
        return {
            "alpha_plus": self.alpha_plus,
            "alpha_minus": self.alpha_minus,
            "alpha0": self.alpha0,
            "two_alpha0": 2.0 * self.alpha0,
            "beta_kappa": self.beta_kappa,
        }


def coulomb_charges(kappa: float) -> CoulombChargeSet:
    kappa = _check_kappa(kappa)
    ap = math.sqrt(kappa / 2.0)
    am = -2.0 * math.sqrt(2.0 / kappa)
    return CoulombChargeSet(
        kappa=kappa,
        alpha_plus=ap,
        alpha_minus=am,
        alpha0=0.5 * (ap + am),
        beta_kappa=math.sqrt(2.0 / kappa),
    )


def delta_pm(kappa: float, h: float) -> tuple[float, float]:
    """Roots of kappa d^2 + (4 - kappa) d - 4 h = 0, returned as (d+, d-)."""
    kappa = _check_kappa(kappa)
    if not h >= 0.0:
        raise DomainError(f"boundary weight must be nonnegative, got {h!r}")
    root = math.sqrt((kappa - 4.0) ** 2 + 16.0 * h * kappa)
    return (kappa - 4.0 + root) / (2.0 * kappa), (kappa - 4.0 - root) / (2.0 * kappa)


def decay_exponent(kappa: float, h: float) -> float:
    """lambda(h) = h/2 + [kappa - 4 + sqrt((kappa-4)^2 + 16 h kappa)] / 16."""
    kappa = _check_kappa(kappa)
    if not h >= 0.0:
        raise DomainError(f"boundary weight must be nonnegative, got {h!r}")
    return 0.5 * h + (kappa - 4.0 + math.sqrt((kappa - 4.0) ** 2 + 16.0 * h * kappa)) / 16.0


@dataclass(frozen=True)
class ExponentBundle:
    kappa: float
    h: float
    delta_plus: float
    delta_minus: float
    two_Delta: float
    lam: float
    beta: float

    @property
    def eps(self) -> float:
        """Eigenvalue of the boundary operator on sin(theta/2)**delta_plus."""
        return -self.lam

    def as_dict(self) -> dict:
        return {
            "h": self.h,
            "delta_plus": self.delta_plus,
            "delta_minus": self.delta_minus,
            "two_Delta": self.two_Delta,
            "lambda": self.lam,
            "eps": self.eps,
            "beta": self.beta,
        }


def exponent_bundle(kappa: float, h: float) -> ExponentBundle:
    kappa = _check_kappa(kappa)
    dp, dm = delta_pm(kappa, h)
    p = sle_parameters(kappa)
    two_Delta = 0.5 * h + p.h0half2 + kappa / 8.0 * dp
    return ExponentBundle(
        kappa=kappa,
        h=float(h),
        delta_plus=dp,
        delta_minus=dm,
        two_Delta=two_Delta,
        lam=two_Delta - p.h0half2,
        beta=coulomb_charges(kappa).charge_of_weight(h, "upper"),
    )


def eigenvalue_eps(kappa: float, d: float, s: float) -> float:
    """epsilon = 2 h_{0;1/2} - d + (kappa/2) s^2 for scaling dimension d and spin s."""
    return sle_parameters(kappa).h0half2 - d + 0.5 * kappa * s * s


def fusion_dimension(kappa: float, s: float) -> float:
    """Scaling dimension compatible with the fusion rule at spin s."""
    return sle_parameters(kappa).h0half2 + 0.5 * kappa * s * s


@dataclass(frozen=True)
class SpinDimension:
    d: float
    s: float

    def is_fusion_consistent(self, kappa: float, tol: float = 1e-10) -> bool:
        return abs(eigenvalue_eps(kappa, self.d, self.s)) <= tol


def charge_balance(kappa: float, beta: float) -> float:
    """Bulk charge 2*alpha fixed by 2 alpha + beta + beta_kappa = 2 alpha0."""
    q = coulomb_charges(kappa)
    return 2.0 * q.alpha0 - beta - q.beta_kappa
