"""Stokes, Jones and Poincaré-sphere polarization calculus.

Every other module builds on the value types defined here:

- ``JonesVector``: complex field amplitudes of the X and Y polarizations.
- ``StokesVector``: power and polarization (s0, s1, s2, s3).
- ``PoincareRotation``: lossless birefringence as a proper rotation of
  (s1, s2, s3) plus a neutral transmittance.

Sign convention: right-circular light is ``s3 = +1`` and is produced by
``ey`` leading ``ex`` by π/2. The physical-angle doubling of the Poincaré
sphere happens only inside ``jones_to_stokes``; all other code works in
Stokes space.

The units of ``s0`` belong to the caller (photons per symbol in the quantum
chain, mW for classical traces) and are never converted here.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Final

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import AlignmentError, EmptyEnsembleError, InvalidStateError

if TYPE_CHECKING:
    from .source import SliceEnsemble

STOKES_TOLERANCE: Final[float] = 1e-9

S1_AXIS: Final[tuple[float, float, float]] = (1.0, 0.0, 0.0)
S2_AXIS: Final[tuple[float, float, float]] = (0.0, 1.0, 0.0)
S3_AXIS: Final[tuple[float, float, float]] = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class JonesVector:
    """Complex field amplitudes of the X and Y polarizations.

    Attributes:
        ex: Complex amplitude of the X (horizontal) component.
        ey: Complex amplitude of the Y (vertical) component.
    """

    ex: complex
    ey: complex

    @property
    def intensity(self) -> float:
        """Total power |ex|² + |ey|²."""
        return abs(self.ex) ** 2 + abs(self.ey) ** 2

    def normalized(self) -> JonesVector:
        """Return the same state scaled to unit intensity.

        Raises:
            InvalidStateError: If both amplitudes are zero.
        """
        norm = math.sqrt(self.intensity)
        if norm == 0.0:
            raise InvalidStateError("zero Jones vector has no direction",
                                    quantity="jones")
        return JonesVector(self.ex / norm, self.ey / norm)


@dataclass(frozen=True)
class StokesVector:
    """A partially polarized state, validated against the Stokes cone.

    Attributes:
        s0: Total power, non-negative.
        s1: Horizontal minus vertical power.
        s2: Diagonal minus antidiagonal power.
        s3: Right- minus left-circular power.

    Raises:
        InvalidStateError: If ``s0 < 0`` or the polarized part exceeds
            ``s0`` beyond the relative tolerance.
    """

    s0: float
    s1: float
    s2: float
    s3: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.s0, self.s1, self.s2, self.s3)):
            raise InvalidStateError("Stokes components must be finite",
                                    quantity="stokes")
        if self.s0 < 0.0:
            raise InvalidStateError(f"s0 must be non-negative, got {self.s0}",
                                    quantity="stokes")
        polarized = math.sqrt(self.s1 ** 2 + self.s2 ** 2 + self.s3 ** 2)
        if polarized > self.s0 * (1.0 + STOKES_TOLERANCE) + STOKES_TOLERANCE * 1e-3:
            raise InvalidStateError(
                f"polarized power {polarized} exceeds total power {self.s0}",
                quantity="stokes")

    @classmethod
    def from_array(cls, values: ArrayLike) -> StokesVector:
        """Build a vector from any four-element sequence."""
        s0, s1, s2, s3 = (float(v) for v in np.asarray(values, dtype=float).reshape(4))
        return cls(s0, s1, s2, s3)

    @classmethod
    def from_axis(cls, axis: ArrayLike, power: float = 1.0,
                  dop: float = 1.0) -> StokesVector:
        """Build a state of the given power pointing along a sphere axis."""
        direction = _unit(axis)
        return cls.from_array([power, *(power * dop * direction)])

    @classmethod
    def unpolarized(cls, power: float = 1.0) -> StokesVector:
        """Fully depolarized light of the given power."""
        return cls(float(power), 0.0, 0.0, 0.0)

    def as_array(self) -> NDArray[np.float64]:
        """Return ``[s0, s1, s2, s3]`` as a float array."""
        return np.array([self.s0, self.s1, self.s2, self.s3], dtype=float)

    @property
    def polarized_part(self) -> NDArray[np.float64]:
        """The (s1, s2, s3) 3-vector."""
        return np.array([self.s1, self.s2, self.s3], dtype=float)

    def scaled(self, factor: float) -> StokesVector:
        """Return the state with every component multiplied by ``factor``."""
        return StokesVector.from_array(self.as_array() * float(factor))


@dataclass(frozen=True, eq=False)
class PoincareRotation:
    """Lossless birefringence followed by neutral loss.

    Attributes:
        matrix: 3x3 proper orthogonal matrix acting on (s1, s2, s3).
        transmittance: Power transmission in (0, 1], applied to all four
            Stokes components.

    Raises:
        InvalidStateError: If the matrix is not orthogonal with
            determinant +1 or the transmittance is out of range.
    """

    matrix: NDArray[np.float64] = field(
        default_factory=lambda: np.eye(3))
    transmittance: float = 1.0

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.shape != (3, 3):
            raise InvalidStateError("rotation matrix must be 3x3",
                                    quantity="rotation")
        if not np.allclose(matrix @ matrix.T, np.eye(3), atol=STOKES_TOLERANCE * 10):
            raise InvalidStateError("rotation matrix is not orthogonal",
                                    quantity="rotation")
        if abs(np.linalg.det(matrix) - 1.0) > STOKES_TOLERANCE * 10:
            raise InvalidStateError("rotation matrix must have determinant +1",
                                    quantity="rotation")
        if not 0.0 < self.transmittance <= 1.0:
            raise InvalidStateError(
                f"transmittance must be in (0, 1], got {self.transmittance}",
                quantity="rotation")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls) -> PoincareRotation:
        """The do-nothing rotation."""
        return cls(np.eye(3), 1.0)

    @classmethod
    def about_axis(cls, axis: ArrayLike, angle: float,
                   transmittance: float = 1.0) -> PoincareRotation:
        """Right-handed rotation by ``angle`` radians about ``axis``."""
        matrix = rotation_matrices(np.asarray(axis, dtype=float)[None, :],
                                   np.array([angle], dtype=float))[0]
        return cls(matrix, transmittance)

    def then(self, other: PoincareRotation) -> PoincareRotation:
        """Compose: apply ``self`` first, then ``other``."""
        return PoincareRotation(other.matrix @ self.matrix,
                                self.transmittance * other.transmittance)

    def inverse(self) -> PoincareRotation:
        """Undo the rotation; loss cannot be undone and stays applied."""
        return PoincareRotation(self.matrix.T, self.transmittance)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoincareRotation):
            return NotImplemented
        return (np.array_equal(self.matrix, other.matrix)
                and self.transmittance == other.transmittance)

    def __hash__(self) -> int:
        return hash((self.matrix.tobytes(), self.transmittance))


def _unit(vector: ArrayLike) -> NDArray[np.float64]:
    """Normalize a 3-vector, rejecting the zero vector."""
    v = np.asarray(vector, dtype=float).reshape(3)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise InvalidStateError("axis must be a non-zero 3-vector",
                                quantity="axis")
    return v / norm


def rotation_matrices(axes: ArrayLike, angles: ArrayLike) -> NDArray[np.float64]:
    """Vectorized Rodrigues formula.

    Args:
        axes: Array of shape (n, 3); rows are normalized internally.
        angles: Array of shape (n,) in radians.

    Returns:
        Array of shape (n, 3, 3) of right-handed rotation matrices.
    """
    axes = np.asarray(axes, dtype=float)
    angles = np.asarray(angles, dtype=float)
    norms = np.linalg.norm(axes, axis=-1, keepdims=True)
    k = axes / np.where(norms == 0.0, 1.0, norms)
    kx, ky, kz = k[..., 0], k[..., 1], k[..., 2]
    zeros = np.zeros_like(kx)
    cross = np.stack([
        np.stack([zeros, -kz, ky], axis=-1),
        np.stack([kz, zeros, -kx], axis=-1),
        np.stack([-ky, kx, zeros], axis=-1),
    ], axis=-2)
    outer = k[..., :, None] * k[..., None, :]
    cos = np.cos(angles)[..., None, None]
    sin = np.sin(angles)[..., None, None]
    eye = np.broadcast_to(np.eye(3), outer.shape)
    return cos * eye + sin * cross + (1.0 - cos) * outer


def minimal_rotation(source: ArrayLike, target: ArrayLike) -> NDArray[np.float64]:
    """Smallest-angle rotation matrix taking direction ``source`` to ``target``."""
    a = _unit(source)
    b = _unit(target)
    axis = np.cross(a, b)
    sin = float(np.linalg.norm(axis))
    cos = float(np.clip(np.dot(a, b), -1.0, 1.0))
    if sin < 1e-12:
        if cos > 0.0:
            return np.eye(3)
        # antipodal: any perpendicular axis gives a minimal (π) rotation
        helper = np.array(S1_AXIS) if abs(a[0]) < 0.9 else np.array(S2_AXIS)
        axis = np.cross(a, helper)
    return rotation_matrices(axis[None, :], np.array([math.atan2(sin, cos)]))[0]


def jones_to_stokes(j: JonesVector) -> StokesVector:
    """Convert field amplitudes to a fully polarized Stokes vector.

    Args:
        j: Jones vector with at least one non-zero amplitude.

    Returns:
        ``(|ex|²+|ey|², |ex|²−|ey|², 2·Re(ex·ey*), 2·Im(ex·ey*))`` with the
        sign of ``s3`` flipped so that ``ey`` leading ``ex`` gives ``+s3``.

    Raises:
        InvalidStateError: If the vector is zero.
    """
    ix = abs(j.ex) ** 2
    iy = abs(j.ey) ** 2
    if ix + iy == 0.0:
        raise InvalidStateError("zero Jones vector carries no state",
                                quantity="jones")
    cross = complex(j.ex) * complex(j.ey).conjugate()
    # ey leading ex by π/2 makes Im(ex·ey*) negative; R is +s3
    s3 = -2.0 * cross.imag
    s0 = ix + iy
    s1 = ix - iy
    s2 = 2.0 * cross.real
    norm = math.sqrt(s1 ** 2 + s2 ** 2 + s3 ** 2)
    if norm > s0:
        s0 = norm
    return StokesVector(s0, s1, s2, s3)


def degree_of_polarization(s: StokesVector) -> float:
    """Return |(s1, s2, s3)| / s0 clipped into [0, 1].

    Raises:
        InvalidStateError: If ``s0`` is zero.
    """
    if s.s0 <= 0.0:
        raise InvalidStateError("degree of polarization undefined for s0 = 0",
                                quantity="dop")
    return min(1.0, float(np.linalg.norm(s.polarized_part)) / s.s0)


def rotate(s: StokesVector, r: PoincareRotation) -> StokesVector:
    """Apply birefringence and neutral loss to a state."""
    polarized = r.matrix @ s.polarized_part
    return StokesVector.from_array(
        r.transmittance * np.concatenate(([s.s0], polarized)))


def analyzer_arms(s: StokesVector, axis: ArrayLike) -> tuple[float, float]:
    """Powers in the pass and complement arms of a polarizing splitter.

    The two arms always sum to ``s0``.
    """
    projection = float(np.dot(_unit(axis), s.polarized_part))
    passed = 0.5 * (s.s0 + projection)
    return passed, s.s0 - passed


def analyzer_transmission(s: StokesVector, axis: ArrayLike) -> float:
    """Power in the pass arm of an analyzer oriented along ``axis``.

    Args:
        s: Incoming state.
        axis: Sphere direction of the pass arm; normalized internally.

    Returns:
        ``(s0 + axis·(s1, s2, s3)) / 2``, clipped at zero against rounding.
    """
    return max(0.0, analyzer_arms(s, axis)[0])


def ensemble_mean(slices: SliceEnsemble) -> StokesVector:
    """Incoherent superposition of a slice ensemble.

    Args:
        slices: Ensemble whose slice weights sum to one.

    Returns:
        The weighted component-wise sum of slice Stokes vectors.

    Raises:
        EmptyEnsembleError: If the ensemble has no slices.
    """
    if len(slices) == 0:
        raise EmptyEnsembleError("ensemble")
    return StokesVector.from_array(slices.weights @ slices.stokes)


def angular_separation(a: StokesVector, b: StokesVector) -> float:
    """Angle on the Poincaré sphere between two polarized parts.

    Raises:
        AlignmentError: If either state has no polarized part.
    """
    directions = []
    for s in (a, b):
        norm = float(np.linalg.norm(s.polarized_part))
        if norm == 0.0:
            raise AlignmentError("state has no polarized part", dop=0.0)
        directions.append(s.polarized_part / norm)
    cos = float(np.clip(np.dot(directions[0], directions[1]), -1.0, 1.0))
    return math.acos(cos)


def stokes_dop(stokes: ArrayLike) -> NDArray[np.float64]:
    """Row-wise DOP of an (n, 4) Stokes array; zero-power rows give 0."""
    stokes = np.atleast_2d(np.asarray(stokes, dtype=float))
    norms = np.linalg.norm(stokes[:, 1:], axis=1)
    return np.divide(norms, stokes[:, 0], out=np.zeros_like(norms),
                     where=stokes[:, 0] > 0.0)


def unit_vectors(vectors: Sequence[ArrayLike]) -> NDArray[np.float64]:
    """Normalize several 3-vectors at once."""
    return np.stack([_unit(v) for v in vectors])
