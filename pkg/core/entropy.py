"""
Familia de entropías generalizadas G, su derivada g (link de calibración),
la inversa g⁻¹ y el conjugado convexo F.

Las funciones aceptan escalares o arrays de numpy y devuelven el mismo tipo.
Los dominios son intervalos abiertos: los bordes levantan DomainError.
"""
import enum
from dataclasses import dataclass

import numpy as np

from config import constants
from core.exceptions import ConfigError, DomainError, DualOverflowError


@enum.unique
class EntropyKind(enum.Enum):
    """Entropías soportadas."""

    SQ = "sq"
    EL = "el"
    ET = "et"
    HD = "hd"

    @classmethod
    def from_token(cls, token):
        """Convierte 'sq', 'EL', 'Et'... en la entropía correspondiente."""
        if isinstance(token, cls):
            return token
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            valid = ", ".join(kind.value for kind in cls)
            raise ConfigError(f"Entropía desconocida '{token}'. Opciones válidas: {valid}")

    def __str__(self):
        return self.name


_REALS = (-np.inf, np.inf)
_POSITIVE = (0.0, np.inf)
_NEGATIVE = (-np.inf, 0.0)


def _as_output(values, scalar):
    return float(values) if scalar else values


@dataclass(frozen=True)
class EntropySpec:
    """Entropía con sus dominios de pesos (ω) y de la variable dual (ν)."""

    kind: EntropyKind
    omega_domain: tuple
    nu_domain: tuple

    # Dominios

    def _check(self, values, domain):
        arr = np.asarray(values, dtype=float)
        low, high = domain
        inside = (arr > low) & (arr < high)
        if not np.all(inside):
            bad = arr[~inside] if arr.ndim else arr
            raise DomainError(self.kind, float(np.ravel(bad)[0]), domain)
        return arr

    def omega_feasible(self, omega):
        arr = np.asarray(omega, dtype=float)
        low, high = self.omega_domain
        return bool(np.all((arr > low) & (arr < high)))

    def nu_feasible(self, nu):
        """ν dentro del dominio de g⁻¹; ET además exige ν ≤ 700 (guardia de overflow)."""
        arr = np.asarray(nu, dtype=float)
        low, high = self.nu_domain
        ok = np.all(np.isfinite(arr) & (arr > low) & (arr < high))
        if self.kind is EntropyKind.ET:
            ok = ok and np.all(arr <= constants.ET_OVERFLOW_NU)
        return bool(ok)

    # Funciones de la entropía

    def G(self, omega):
        scalar = np.ndim(omega) == 0
        w = self._check(omega, self.omega_domain)
        if self.kind is EntropyKind.SQ:
            out = w ** 2 / 2.0
        elif self.kind is EntropyKind.EL:
            out = -np.log(w)
        elif self.kind is EntropyKind.ET:
            out = w * np.log(w) - w
        else:
            out = -np.sqrt(w)
        return _as_output(out, scalar)

    def g(self, omega):
        scalar = np.ndim(omega) == 0
        w = self._check(omega, self.omega_domain)
        if self.kind is EntropyKind.SQ:
            out = w.copy() if w.ndim else w
        elif self.kind is EntropyKind.EL:
            out = -1.0 / w
        elif self.kind is EntropyKind.ET:
            out = np.log(w)
        else:
            out = -1.0 / (2.0 * np.sqrt(w))
        return _as_output(out, scalar)

    def g_inverse(self, nu):
        scalar = np.ndim(nu) == 0
        v = self._check(nu, self.nu_domain)
        if self.kind is EntropyKind.SQ:
            out = v.copy() if v.ndim else v
        elif self.kind is EntropyKind.EL:
            out = -1.0 / v
        elif self.kind is EntropyKind.ET:
            if np.any(v > constants.ET_OVERFLOW_NU):
                raise DualOverflowError(
                    f"exp(ν) desborda para ν={float(np.max(v)):.4g}: iterado dual divergente"
                )
            out = np.exp(v)
        else:
            out = 1.0 / (4.0 * v ** 2)
        return _as_output(out, scalar)

    def f_prime(self, nu):
        """Derivada de g⁻¹, los pesos de la proyección f′(λᵀs)."""
        scalar = np.ndim(nu) == 0
        v = self._check(nu, self.nu_domain)
        if self.kind is EntropyKind.SQ:
            out = np.ones_like(v)
        elif self.kind is EntropyKind.EL:
            out = 1.0 / v ** 2
        elif self.kind is EntropyKind.ET:
            out = self.g_inverse(v)
        else:
            out = -1.0 / (2.0 * v ** 3)
        return _as_output(out, scalar)

    def F(self, nu):
        """Conjugado convexo F(ν) = −G(g⁻¹(ν)) + ν·g⁻¹(ν), en forma cerrada."""
        scalar = np.ndim(nu) == 0
        v = self._check(nu, self.nu_domain)
        if self.kind is EntropyKind.SQ:
            out = v ** 2 / 2.0
        elif self.kind is EntropyKind.EL:
            out = -np.log(-v) - 1.0
        elif self.kind is EntropyKind.ET:
            out = self.g_inverse(v)
        else:
            out = -1.0 / (4.0 * v)
        return _as_output(out, scalar)

    def debias_covariate(self, pi):
        """Covariable de desesgo g(1/π)."""
        scalar = np.ndim(pi) == 0
        p = np.asarray(pi, dtype=float)
        if not np.all((p > 0.0) & (p <= 1.0)):
            bad = p[~((p > 0.0) & (p <= 1.0))] if p.ndim else p
            raise DomainError(self.kind, float(np.ravel(bad)[0]), (0.0, 1.0))
        return _as_output(self.g(1.0 / p), scalar)


ENTROPIES = {
    EntropyKind.SQ: EntropySpec(EntropyKind.SQ, _REALS, _REALS),
    EntropyKind.EL: EntropySpec(EntropyKind.EL, _POSITIVE, _NEGATIVE),
    EntropyKind.ET: EntropySpec(EntropyKind.ET, _POSITIVE, _REALS),
    EntropyKind.HD: EntropySpec(EntropyKind.HD, _POSITIVE, _NEGATIVE),
}


def get_entropy(kind):
    """Devuelve el EntropySpec para una entropía o su token."""
    if isinstance(kind, EntropySpec):
        return kind
    return ENTROPIES[EntropyKind.from_token(kind)]


def G_value(kind, omega):
    return get_entropy(kind).G(omega)


def g_value(kind, omega):
    return get_entropy(kind).g(omega)


def g_inverse(kind, nu):
    return get_entropy(kind).g_inverse(nu)


def F_value(kind, nu):
    return get_entropy(kind).F(nu)


def debias_covariate(kind, pi):
    return get_entropy(kind).debias_covariate(pi)
