"""Fourier pseudospectral toolkit on the unit torus [0,1)^2.

Fields are plain ``numpy`` arrays of shape ``(n1, n2)``; axis 0 runs along
x1 and axis 1 along x2.  Real fields go through ``rfft2`` and complex
fields through ``fft2``, so real inputs always produce real outputs.
Integrals are sample means because the torus has unit area.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import FormatError, NonZeroMeanRhs

POISSON_MEAN_TOL = 1e-10

DUMP_MAGIC = b"QHDF"
DUMP_VERSION = 1


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Uniform ``n1 x n2`` collocation grid with cached wavenumbers."""

    n1: int
    n2: int
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("n1", "n2"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 8 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 8, got {n!r}")
        j1 = np.fft.fftfreq(self.n1, 1.0 / self.n1)
        j2f = np.fft.fftfreq(self.n2, 1.0 / self.n2)
        j2r = np.fft.rfftfreq(self.n2, 1.0 / self.n2)
        c = self._cache
        c["j1"], c["j2f"], c["j2r"] = j1, j2f, j2r
        for tag, j2 in (("f", j2f), ("r", j2r)):
            k1 = 2 * np.pi * j1[:, None] * np.ones_like(j2)[None, :]
            k2 = 2 * np.pi * np.ones_like(j1)[:, None] * j2[None, :]
            ksq = k1**2 + k2**2
            # odd derivatives drop the Nyquist coefficient
            d1 = np.where(np.abs(j1)[:, None] == self.n1 // 2, 0.0, k1)
            d2 = np.where(np.abs(j2)[None, :] == self.n2 // 2, 0.0, k2)
            inv = np.zeros_like(ksq)
            np.divide(1.0, ksq, out=inv, where=ksq > 0)
            keep = (np.abs(j1)[:, None] <= self.n1 / 3) & (np.abs(j2)[None, :] <= self.n2 / 3)
            c["k1" + tag], c["k2" + tag] = k1, k2
            c["d1" + tag], c["d2" + tag] = d1, d2
            c["ksq" + tag], c["invksq" + tag] = ksq, inv
            c["keep" + tag] = keep

    # ----------------------------------------------------------------- basics
    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample coordinates (x1, x2) as ``(n1, n2)`` arrays."""
        x1 = np.arange(self.n1) / self.n1
        x2 = np.arange(self.n2) / self.n2
        return np.meshgrid(x1, x2, indexing="ij")

    def wavenumbers(self, real: bool = False):
        """Return ``(k1, k2, |k|^2)`` in the layout used for real or complex transforms."""
        tag = "r" if real else "f"
        c = self._cache
        return c["k1" + tag], c["k2" + tag], c["ksq" + tag]

    def _k(self, name: str, f: np.ndarray) -> np.ndarray:
        return self._cache[name + ("r" if np.isrealobj(f) else "f")]

    def forward(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfft2(f) if np.isrealobj(f) else sfft.fft2(f)

    def inverse(self, fh: np.ndarray, real: bool) -> np.ndarray:
        if real:
            return sfft.irfft2(fh, s=self.shape)
        return sfft.ifft2(fh)

    def spectral(self, f: np.ndarray) -> np.ndarray:
        """Full complex coefficients normalised so that ``sum |c|^2 = mean |f|^2``."""
        return sfft.fft2(f) / self.size

    # -------------------------------------------------------------- operators
    def gradient(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        real = np.isrealobj(f)
        fh = self.forward(f)
        return (
            self.inverse(1j * self._k("d1", f) * fh, real),
            self.inverse(1j * self._k("d2", f) * fh, real),
        )

    def divergence(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        real = np.isrealobj(u1) and np.isrealobj(u2)
        a = u1 if real else np.asarray(u1, dtype=complex)
        b = u2 if real else np.asarray(u2, dtype=complex)
        out = 1j * self._k("d1", a) * self.forward(a) + 1j * self._k("d2", b) * self.forward(b)
        return self.inverse(out, real)

    def curl(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        """Scalar curl ``d1 u2 - d2 u1`` of a planar vector field."""
        real = np.isrealobj(u1) and np.isrealobj(u2)
        out = 1j * self._k("d1", u2) * self.forward(u2) - 1j * self._k("d2", u1) * self.forward(u1)
        return self.inverse(out, real)

    def hessian(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Second derivatives ``(f_11, f_12, f_22)``."""
        real = np.isrealobj(f)
        fh = self.forward(f)
        k1, k2 = self._k("k1", f), self._k("k2", f)
        d1, d2 = self._k("d1", f), self._k("d2", f)
        return (
            self.inverse(-k1 * k1 * fh, real),
            self.inverse(-d1 * d2 * fh, real),
            self.inverse(-k2 * k2 * fh, real),
        )

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.inverse(-self._k("ksq", f) * self.forward(f), np.isrealobj(f))

    def bilaplacian(self, f: np.ndarray) -> np.ndarray:
        return self.inverse(self._k("ksq", f) ** 2 * self.forward(f), np.isrealobj(f))

    def solve_poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Zero-mean solution of ``-Lap V = rhs``."""
        m = float(np.mean(rhs).real) if np.iscomplexobj(rhs) else float(np.mean(rhs))
        if abs(m) > POISSON_MEAN_TOL:
            raise NonZeroMeanRhs(f"Poisson right-hand side has mean {m:.3e}")
        return self.inverse(self._k("invksq", rhs) * self.forward(rhs), np.isrealobj(rhs))

    def potential_of(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        """Zero-mean scalar ``S`` whose gradient is the curl-free part of ``(u1, u2)``."""
        out = -1j * (self._cache["d1r"] * sfft.rfft2(u1) + self._cache["d2r"] * sfft.rfft2(u2))
        return sfft.irfft2(out * self._cache["invksqr"], s=self.shape)

    def dealias(self, f: np.ndarray) -> np.ndarray:
        return self.inverse(self._k("keep", f) * self.forward(f), np.isrealobj(f))

    @staticmethod
    def integrate(f: np.ndarray) -> float:
        m = np.mean(f)
        return float(m.real) if np.iscomplexobj(m) else float(m)

    def norm(self, f: np.ndarray) -> float:
        """L2 norm on the unit torus."""
        return float(np.sqrt(np.mean(np.abs(f) ** 2)))

    def h2_norm(self, f: np.ndarray, resolved: bool = False) -> float:
        """Sobolev H^2 norm with weight ``(1 + |k|^2)^2``.

        ``resolved=True`` restricts the sum to the 2/3 band kept by ``dealias``.
        """
        ch = self.spectral(f)
        w = (1.0 + self._cache["ksqf"]) ** 2
        if resolved:
            w = w * self._cache["keepf"]
        return float(np.sqrt(np.sum(w * np.abs(ch) ** 2)))


# ------------------------------------------------------------------ field dumps
def dump_field(path: str | Path, values: np.ndarray, name: str = "") -> None:
    """Write one field in the QHDF little-endian binary format."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("only 2D fields can be dumped")
    n1, n2 = values.shape
    complex_kind = np.iscomplexobj(values)
    raw_name = name.encode("utf-8")
    header = DUMP_MAGIC + struct.pack("<IIIBH", DUMP_VERSION, n1, n2, int(complex_kind), len(raw_name))
    if complex_kind:
        payload = np.ascontiguousarray(values, dtype="<c16").tobytes()
    else:
        payload = np.ascontiguousarray(values, dtype="<f8").tobytes()
    Path(path).write_bytes(header + raw_name + payload)


def load_field(path: str | Path) -> tuple[str, np.ndarray]:
    """Read a QHDF dump; returns ``(name, values)``."""
    data = Path(path).read_bytes()
    fixed = 4 + struct.calcsize("<IIIBH")
    if len(data) < fixed or data[:4] != DUMP_MAGIC:
        raise FormatError("bad magic: not a QHDF field dump")
    version, n1, n2, kind, name_len = struct.unpack("<IIIBH", data[4:fixed])
    if version != DUMP_VERSION:
        raise FormatError(f"unsupported dump version {version}")
    if kind not in (0, 1):
        raise FormatError(f"unknown field kind {kind}")
    if n1 < 8 or n2 < 8 or n1 % 2 or n2 % 2:
        raise FormatError(f"invalid grid dimensions {n1}x{n2}")
    name_end = fixed + name_len
    try:
        name = data[fixed:name_end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("field name is not valid UTF-8") from exc
    itemsize = 16 if kind else 8
    payload = data[name_end:]
    if len(payload) != n1 * n2 * itemsize:
        raise FormatError(f"payload size {len(payload)} does not match {n1}x{n2} grid")
    dtype = "<c16" if kind else "<f8"
    values = np.frombuffer(payload, dtype=dtype).reshape(n1, n2).astype(complex if kind else float)
    return name, values
