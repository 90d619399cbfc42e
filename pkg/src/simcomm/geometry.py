"""Physical model of a stacked intelligent metasurface (SIM).

Layer elements sit on an ``n1 x n2`` grid in the xy-plane, layers are stacked
along +z with equal spacing ``sim_thickness / num_layers`` and the base-station
antennas form a half-wavelength ULA along x in the plane z = 0, so the feed
distance equals the layer spacing.

Element index ``n = p * n2 + q`` where ``p`` runs along x (the vartheta axis)
and ``q`` along y (the nu axis); this ordering makes the planar steering vector
the Kronecker product ``u(vartheta, n1) kron u(nu, n2)``.

A phase stack is a complex array of shape ``(L, N)``; row ``l`` holds the
transmission coefficients of layer ``l`` (0-based, layer 0 faces the antennas).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


class GeometryError(ValueError):
    """Raised for degenerate or out-of-range physical configurations."""


@dataclass(frozen=True)
class SimGeometry:
    """Physical SIM layout; every channel in the model derives from it.

    Lengths are in meters.  ``sim_thickness`` defaults to five wavelengths and
    the element pitch to half a wavelength.
    """

    num_layers: int
    n1: int
    n2: int
    wavelength: float = SPEED_OF_LIGHT / 30e9
    sim_thickness: float | None = None
    element_dx: float | None = None
    element_dy: float | None = None
    num_antennas: int = 1

    def __post_init__(self):
        if self.sim_thickness is None:
            object.__setattr__(self, "sim_thickness", 5.0 * self.wavelength)
        if self.element_dx is None:
            object.__setattr__(self, "element_dx", self.wavelength / 2)
        if self.element_dy is None:
            object.__setattr__(self, "element_dy", self.wavelength / 2)
        for name in ("num_layers", "n1", "n2", "num_antennas"):
            if int(getattr(self, name)) < 1:
                raise GeometryError(f"{name} must be a positive integer")
        for name in ("wavelength", "sim_thickness", "element_dx", "element_dy"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise GeometryError(f"{name} must be a positive length, got {val}")

    @property
    def num_elements(self) -> int:
        return self.n1 * self.n2

    @property
    def layer_spacing(self) -> float:
        return self.sim_thickness / self.num_layers

    @cached_property
    def grid_xy(self) -> np.ndarray:
        """(N, 2) in-plane coordinates, centered on the SIM axis."""
        p, q = np.meshgrid(np.arange(self.n1), np.arange(self.n2), indexing="ij")
        x = (p.ravel() - (self.n1 - 1) / 2) * self.element_dx
        y = (q.ravel() - (self.n2 - 1) / 2) * self.element_dy
        return np.stack([x, y], axis=1)

    def layer_element_positions(self, layer: int) -> np.ndarray:
        """(N, 3) element coordinates of ``layer`` (0-based)."""
        if not 0 <= layer < self.num_layers:
            raise GeometryError(f"layer {layer} outside [0, {self.num_layers})")
        z = np.full(self.num_elements, (layer + 1) * self.layer_spacing)
        return np.column_stack([self.grid_xy, z])

    @cached_property
    def antenna_positions(self) -> np.ndarray:
        """(M, 3) antenna coordinates: half-wavelength ULA along x at z = 0."""
        m = np.arange(self.num_antennas)
        x = (m - (self.num_antennas - 1) / 2) * self.wavelength / 2
        return np.column_stack([x, np.zeros_like(x), np.zeros_like(x)])

    def signature(self) -> str:
        """Stable hash of the geometry, used to tie codebook files to it."""
        import hashlib

        text = "|".join(
            repr(v)
            for v in (
                self.num_layers, self.n1, self.n2, float(self.wavelength),
                float(self.sim_thickness), float(self.element_dx),
                float(self.element_dy), self.num_antennas,
            )
        )
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def rs_coefficient(distance, cos_angle, dx, dy, wavelength):
    """Rayleigh-Sommerfeld diffraction gain between two elements.

    Vectorized over ``distance`` and ``cos_angle``.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise GeometryError("zero propagation distance (degenerate geometry)")
    k = 2 * np.pi * d / wavelength
    return (
        dx * dy * np.asarray(cos_angle) * (wavelength - 2j * np.pi * d)
        / (2 * np.pi * d**2 * wavelength)
        * np.exp(1j * k)
    )


def interlayer_matrix(geom: SimGeometry) -> np.ndarray:
    """The N x N diffraction matrix between any two adjacent layers.

    Entry ``[n, n']`` couples element ``n'`` of the previous layer to element
    ``n`` of the next one.  All inter-layer matrices coincide because the
    layers are identical and equally spaced.
    """
    xy = geom.grid_xy
    s = geom.layer_spacing
    diff = xy[:, None, :] - xy[None, :, :]
    d = np.sqrt(np.sum(diff**2, axis=-1) + s**2)
    return rs_coefficient(d, s / d, geom.element_dx, geom.element_dy, geom.wavelength)


def interlayer_coefficient(geom: SimGeometry, layer: int, n: int, n_prev: int) -> complex:
    """Single entry of the matrix feeding ``layer`` (0-based, ``layer >= 1``)."""
    if not 1 <= layer < geom.num_layers:
        raise GeometryError(f"layer {layer} has no incoming inter-layer channel")
    a = geom.layer_element_positions(layer - 1)[n_prev]
    b = geom.layer_element_positions(layer)[n]
    d = float(np.linalg.norm(b - a))
    if d == 0:
        raise GeometryError("zero propagation distance (degenerate geometry)")
    cos_angle = (b[2] - a[2]) / d
    return complex(rs_coefficient(d, cos_angle, geom.element_dx, geom.element_dy, geom.wavelength))


def feed_matrix(geom: SimGeometry) -> np.ndarray:
    """(M, N) array whose row ``k`` is the feed vector of antenna ``k``."""
    ant = geom.antenna_positions
    elem = geom.layer_element_positions(0)
    diff = elem[None, :, :] - ant[:, None, :]
    d = np.linalg.norm(diff, axis=-1)
    return rs_coefficient(d, diff[..., 2] / d, geom.element_dx, geom.element_dy, geom.wavelength)


def feed_coefficient(geom: SimGeometry, k: int, n: int) -> complex:
    """Diffraction gain from antenna ``k`` to element ``n`` of the first layer."""
    a = geom.antenna_positions[k]
    b = geom.layer_element_positions(0)[n]
    d = float(np.linalg.norm(b - a))
    if d == 0:
        raise GeometryError("zero propagation distance (degenerate geometry)")
    return complex(
        rs_coefficient(d, (b[2] - a[2]) / d, geom.element_dx, geom.element_dy, geom.wavelength)
    )


# ---------------------------------------------------------------------------
# angles and steering vectors


@dataclass(frozen=True)
class AngleCoordinates:
    theta: float
    phi: float
    psi: float
    vartheta: float
    nu: float

    @classmethod
    def from_physical(cls, theta: float, phi: float) -> "AngleCoordinates":
        vt, nu = decouple_angles(theta, phi)
        return cls(theta, phi, float(np.arccos(vt)), vt, nu)

    @classmethod
    def from_decoupled(cls, vartheta: float, nu: float) -> "AngleCoordinates":
        theta, phi = recouple_angles(vartheta, nu)
        return cls(theta, phi, float(np.arccos(vartheta)), float(vartheta), float(nu))


def decouple_angles(theta: float, phi: float) -> tuple[float, float]:
    """Map (elevation, azimuth) to the decoupled pair (vartheta, nu)."""
    return float(np.sin(theta) * np.sin(phi)), float(np.cos(theta))


def recouple_angles(vartheta: float, nu: float) -> tuple[float, float]:
    """Inverse of :func:`decouple_angles` inside the visible region."""
    if not -1 < nu < 1:
        raise GeometryError(f"nu={nu} must lie strictly inside (-1, 1)")
    theta = float(np.arccos(nu))
    s = np.sin(theta)
    if abs(vartheta) > s * (1 + 1e-15):
        raise GeometryError(
            f"vartheta={vartheta} exceeds sin(theta)={s:.6g}: no physical direction"
        )
    return theta, float(np.arcsin(np.clip(vartheta / s, -1.0, 1.0)))


def ula_vector(x, m: int) -> np.ndarray:
    """Unnormalized linear-array response ``[1, e^{-j pi x}, ..., e^{-j pi (m-1) x}]``.

    ``x`` may be an array; the element axis is then the first one.
    """
    x = np.asarray(x, dtype=float)
    return np.exp(-1j * np.pi * np.multiply.outer(np.arange(m), x))


def steering_vector(geom: SimGeometry, vartheta: float, nu: float) -> np.ndarray:
    """Unit-norm planar steering vector ``u(vartheta, n1) kron u(nu, n2) / sqrt(N)``."""
    return np.kron(ula_vector(vartheta, geom.n1), ula_vector(nu, geom.n2)) / np.sqrt(
        geom.num_elements
    )


def steering_matrix(geom: SimGeometry, vartheta, nu) -> np.ndarray:
    """Columns are steering vectors for paired arrays ``vartheta[i], nu[i]``."""
    ux = ula_vector(np.atleast_1d(vartheta), geom.n1)
    uy = ula_vector(np.atleast_1d(nu), geom.n2)
    return (ux[:, None, :] * uy[None, :, :]).reshape(geom.num_elements, -1) / np.sqrt(
        geom.num_elements
    )


def pathloss(d: float) -> float:
    """Large-scale amplitude coefficient ``1e-3 * d^-2.2`` (d in meters)."""
    if d <= 0:
        raise GeometryError(f"distance must be positive, got {d}")
    return 1e-3 * d ** (-2.2)


# ---------------------------------------------------------------------------
# channels


@dataclass(frozen=True)
class UserChannel:
    alpha: complex
    angles: AngleCoordinates
    distance: float
    h: np.ndarray = field(repr=False)


def make_user(
    geom: SimGeometry,
    vartheta: float,
    nu: float,
    distance: float = 20.0,
    alpha: complex | None = None,
) -> UserChannel:
    """Line-of-sight user at decoupled angles ``(vartheta, nu)``.

    ``alpha`` defaults to the distance-based path loss.
    """
    if alpha is None:
        alpha = pathloss(distance)
    try:
        angles = AngleCoordinates.from_decoupled(vartheta, nu)
    except GeometryError:
        # directions outside the visible cone are still valid array inputs
        angles = AngleCoordinates(float("nan"), float("nan"), float(np.arccos(np.clip(vartheta, -1, 1))), vartheta, nu)
    h = alpha * steering_vector(geom, vartheta, nu)
    h.setflags(write=False)
    return UserChannel(complex(alpha), angles, float(distance), h)


@dataclass(frozen=True)
class ChannelSet:
    """Inter-layer matrices, antenna feeds and user channels of one system.

    ``interlayer[i]`` feeds layer ``i + 1``; ``feeds[k]`` is the first-layer
    illumination by antenna ``k``.
    """

    geometry: SimGeometry
    interlayer: tuple
    feeds: np.ndarray = field(repr=False)
    users: tuple = ()

    @classmethod
    def build(cls, geom: SimGeometry, users=()) -> "ChannelSet":
        w = interlayer_matrix(geom) if geom.num_layers > 1 else None
        if w is not None:
            w.setflags(write=False)
        feeds = feed_matrix(geom)
        feeds.setflags(write=False)
        return cls(geom, tuple(w for _ in range(geom.num_layers - 1)), feeds, tuple(users))

    def with_users(self, users) -> "ChannelSet":
        return ChannelSet(self.geometry, self.interlayer, self.feeds, tuple(users))

    @property
    def user_matrix(self) -> np.ndarray:
        """(K, N) array of user channels ``h_k``."""
        return np.array([u.h for u in self.users])


# ---------------------------------------------------------------------------
# wave-domain beamforming


def propagate(interlayer, stack: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply the SIM to feed signal(s): ``G @ x`` without forming ``G``.

    ``x`` may be a vector or an (N, K) matrix.
    """
    y = stack[0][:, None] * x if x.ndim == 2 else stack[0] * x
    for layer in range(1, stack.shape[0]):
        y = interlayer[layer - 1] @ y
        y = (stack[layer][:, None] * y) if y.ndim == 2 else stack[layer] * y
    return y


def wave_beamformer(channels: ChannelSet, stack: np.ndarray) -> np.ndarray:
    """The wave-domain beamformer ``G = Phi^L W^L ... W^2 Phi^1``."""
    return propagate(channels.interlayer, stack, np.eye(stack.shape[1], dtype=complex))


def effective_matrix(interlayer, stack: np.ndarray, layer: int, w1: np.ndarray) -> np.ndarray:
    """Matrix ``C`` with ``C @ stack[layer] == G @ w1`` for the other layers fixed."""
    n_layers, n = stack.shape
    x = w1.astype(complex)
    for l in range(layer):
        x = stack[l] * x
        x = interlayer[l] @ x
    # suffix operator: Phi^L W^L ... Phi^{l+1} W^{l+1}
    t = None
    for l in range(layer + 1, n_layers):
        w = interlayer[l - 1]
        t = w if t is None else interlayer[l - 1] @ t
        t = stack[l][:, None] * t
    if t is None:
        return np.diag(x)
    return t * x[None, :]


def random_stack(rng: np.random.Generator, num_layers: int, n: int) -> np.ndarray:
    """Uniformly random unit-modulus phase stack."""
    return np.exp(2j * np.pi * rng.random((num_layers, n)))
