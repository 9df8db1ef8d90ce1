"""RIS array geometry: wavenumbers, element layout, response vectors and AOD.

All vectors that run over RIS elements use column-major ordering: element
``(l, m)`` (row ``l``, column ``m``) sits at flat index ``l + m * m_rows``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS_POS = 1e-9  # coincident-point / on-axis threshold, meters


class GeometryError(ValueError):
    """Raised for degenerate geometry (coincident points, on-axis singularities)."""


@dataclass(frozen=True)
class Angles:
    """Azimuth in (-pi, pi], elevation in [0, pi], radians."""

    az: float
    el: float
    degenerate: bool = field(default=False, compare=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.az, self.el])


def rotation_is_valid(R: np.ndarray, tol: float = 1e-12) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return bool(np.allclose(R.T @ R, np.eye(3), atol=tol) and abs(np.linalg.det(R) - 1.0) <= tol)


def rotation_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RisGeometry:
    """Uniform planar RIS of ``m_rows x m_cols`` elements with spacing ``spacing``.

    ``rotation`` maps global offsets into RIS coordinates, its rows being the
    RIS axes expressed in the global frame. Elements lie in the plane spanned
    by the first and third RIS axes.
    """

    m_rows: int
    m_cols: int
    spacing: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if int(self.m_rows) < 1 or int(self.m_cols) < 1:
            raise ValueError("RIS needs at least one row and one column")
        if not self.spacing > 0:
            raise ValueError("element spacing must be positive")
        R = np.asarray(self.rotation, dtype=float)
        if not rotation_is_valid(R):
            raise ValueError("rotation must be a proper orthonormal 3x3 matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float).reshape(3))

    @property
    def n_elements(self) -> int:
        return self.m_rows * self.m_cols


def wavenumber(angles: Angles, wavelength: float) -> np.ndarray:
    """Wavenumber vector ``-(2 pi / lambda) [sin el cos az, sin el sin az, cos el]``."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    az, el = angles.az, angles.el
    return -(2 * np.pi / wavelength) * np.array(
        [np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)]
    )


def wavenumber_derivatives(angles: Angles, wavelength: float) -> tuple[np.ndarray, np.ndarray]:
    """Partial derivatives of :func:`wavenumber` w.r.t. azimuth and elevation."""
    az, el = angles.az, angles.el
    scale = -(2 * np.pi / wavelength)
    d_az = scale * np.array([-np.sin(el) * np.sin(az), np.sin(el) * np.cos(az), 0.0])
    d_el = scale * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), -np.sin(el)])
    return d_az, d_el


def aod_from_position(p, ris: RisGeometry) -> Angles:
    """Angle of departure from the RIS towards point ``p`` in RIS coordinates.

    On the RIS third axis the azimuth is undefined; it is returned as 0 and the
    result is flagged ``degenerate``.
    """
    offset = np.asarray(p, dtype=float) - ris.origin
    dist = np.linalg.norm(offset)
    if dist < EPS_POS:
        raise GeometryError("point coincides with the RIS origin")
    s = ris.rotation @ offset
    el = float(np.arccos(np.clip(s[2] / dist, -1.0, 1.0)))
    if np.hypot(s[0], s[1]) < EPS_POS:
        return Angles(0.0, el, degenerate=True)
    return Angles(float(np.arctan2(s[1], s[0])), el)


def direction(angles: Angles) -> np.ndarray:
    """Unit vector (RIS coordinates) pointing along ``angles``."""
    az, el = angles.az, angles.el
    return np.array([np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)])


def element_positions(ris: RisGeometry) -> np.ndarray:
    """Element positions in RIS coordinates, shape ``(m_rows * m_cols, 3)``, column-major."""
    d = ris.spacing
    rows = d * np.arange(ris.m_rows) - d * (ris.m_rows - 1) / 2
    cols = d * np.arange(ris.m_cols) - d * (ris.m_cols - 1) / 2
    q = np.zeros((ris.n_elements, 3))
    q[:, 0] = np.tile(rows, ris.m_cols)
    q[:, 2] = np.repeat(cols, ris.m_rows)
    return q


def row_col_vectors(angles: Angles, ris: RisGeometry, wavelength: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis response factors ``a_r`` (length m_rows) and ``a_c`` (length m_cols).

    Both include their centering phase, so ``steering_vector == kron(a_c, a_r)``.
    """
    k = wavenumber(angles, wavelength)
    d = ris.spacing
    l = np.arange(ris.m_rows)
    m = np.arange(ris.m_cols)
    beta_r = k[0] * (ris.m_rows - 1) * d / 2
    beta_c = k[2] * (ris.m_cols - 1) * d / 2
    a_r = np.exp(1j * beta_r) * np.exp(-1j * k[0] * l * d)
    a_c = np.exp(1j * beta_c) * np.exp(-1j * k[2] * m * d)
    return a_r, a_c


def steering_vector(angles: Angles, ris: RisGeometry, wavelength: float) -> np.ndarray:
    """RIS response ``exp(-j k . q_lm)`` for every element, column-major."""
    a_r, a_c = row_col_vectors(angles, ris, wavelength)
    return np.kron(a_c, a_r)


def steering_vector_derivatives(angles: Angles, ris: RisGeometry, wavelength: float):
    """Response vector and its derivatives w.r.t. azimuth and elevation."""
    a = steering_vector(angles, ris, wavelength)
    q = element_positions(ris)
    d_az, d_el = wavenumber_derivatives(angles, wavelength)
    return a, a * (-1j * (q @ d_az)), a * (-1j * (q @ d_el))


def angles_from_wavenumber(k1: float, k3: float, wavelength: float) -> tuple[Angles, bool]:
    """Invert the in-plane wavenumber components, taking the negative normal root.

    Returns the angles and a flag that is True when ``k1**2 + k3**2`` exceeded
    ``(2 pi / lambda)**2`` and the normal component had to be clamped to zero.
    """
    k0 = 2 * np.pi / wavelength
    rad = k0**2 - k1**2 - k3**2
    clamped = rad < 0
    k2 = -np.sqrt(max(rad, 0.0))
    az = float(np.arctan2(-k2, -k1))
    el = float(np.arccos(np.clip(-k3 / k0, -1.0, 1.0)))
    return Angles(az, el), bool(clamped)


def wrap_angle(x):
    """Wrap to (-pi, pi]."""
    return -((-np.asarray(x) + np.pi) % (2 * np.pi) - np.pi)
