"""Propagation of the source modes through the probe and reference arms.

Layout of one arm: source -> f-f lens (far field) -> [phase object, probe
only] -> Fresnel defocus by z in {-dz, 0, +dz} -> ideal unit-magnification
imaging (coordinate inversion). Intensities are summed incoherently over the
modes; both arms see the identical mode sequence.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as sfft

from . import pgm
from .source import SourceModel, envelope, mode_phase
from .wavefield import ComplexField, GridSpec, RealField, frequency_grid

PLANES = ("minus", "focus", "plus")


class PropagationError(ValueError):
    pass


@dataclass(frozen=True)
class OpticalTrain:
    f: float
    dz: float

    def __post_init__(self):
        if not self.f > 0:
            raise ValueError(f"focal length must be positive, got {self.f}")
        if not self.dz >= 0:
            raise ValueError(f"defocus distance must be >= 0, got {self.dz}")


@dataclass(frozen=True)
class PhaseObject:
    map: RealField
    descriptor: dict
    height: float


@dataclass
class BeamTriples:
    """Expected photons per propagation pixel at the image plane.

    ``probe`` and ``reference`` have shape ``(3, n, n)`` ordered as
    ``(-dz, 0, +dz)``.
    """

    spec: GridSpec
    dz: float
    probe: np.ndarray
    reference: np.ndarray
    mean_photons: float
    modes: int
    meta: dict = field(default_factory=dict)

    def scaled(self, mean_photons: float) -> "BeamTriples":
        c = mean_photons / self.mean_photons
        return BeamTriples(self.spec, self.dz, self.probe * c, self.reference * c,
                           mean_photons, self.modes, dict(self.meta))


# ---------------------------------------------------------------- objects

def _center_box(n: int, size: int) -> slice:
    start = n // 2 - size // 2
    return slice(start, start + size)


def _binary_mask(descriptor: dict, n: int) -> np.ndarray:
    kind = descriptor["kind"]
    mask = np.zeros((n, n))
    c = n // 2
    if kind == "nine_squares":
        side = int(round(descriptor.get("side_fraction", 1 / 12) * n))
        gap = int(round(descriptor.get("gap_fraction", 1 / 24) * n))
        total = 3 * side + 2 * gap
        if side < 1 or total > n:
            raise ValueError(f"nine_squares geometry does not fit a {n}-pixel grid")
        start = c - total // 2
        for row in range(3):
            for col in range(3):
                y0 = start + row * (side + gap)
                x0 = start + col * (side + gap)
                mask[y0:y0 + side, x0:x0 + side] = 1.0
    elif kind == "square":
        side = int(round(descriptor.get("side_fraction", 0.5) * n))
        box = _center_box(n, side)
        mask[box, box] = 1.0
    elif kind == "disk":
        radius = descriptor.get("radius_fraction", 0.25) * n
        i = np.arange(n) - c
        mask[(i[:, None] ** 2 + i[None, :] ** 2) < radius**2] = 1.0
    elif kind == "step":
        mask[:, c:] = 1.0
    else:
        raise ValueError(f"unknown phase-object kind {kind!r}")
    return mask


def _raster_mask(descriptor: dict, n: int) -> np.ndarray:
    try:
        data = pgm.read_pgm(descriptor["path"]).astype(float)
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read raster mask {descriptor.get('path')!r}: {exc}") from exc
    upsample = int(descriptor.get("upsample", 1))
    if upsample > 1:
        data = np.kron(data, np.ones((upsample, upsample)))
    rows, cols = data.shape
    if rows > n or cols > n:
        raise ValueError(f"raster mask {data.shape} larger than the {n}x{n} grid")
    peak = data.max()
    mask = np.zeros((n, n))
    if peak > 0:
        mask[_center_box(n, rows), _center_box(n, cols)] = data / peak
    return mask


def make_phase_object(descriptor, spec: GridSpec, h: float) -> PhaseObject:
    """Build a pure phase object of height ``h`` radians.

    ``descriptor`` is a dict with a ``kind`` key (``nine_squares``,
    ``square``, ``disk``, ``step`` or ``raster``) plus geometry parameters
    expressed as fractions of the grid side; a bare string is taken as the
    kind with default geometry.
    """
    if isinstance(descriptor, str):
        descriptor = {"kind": descriptor}
    if not np.isfinite(h):
        raise ValueError(f"phase height must be finite, got {h!r}")
    if descriptor.get("kind") == "raster":
        mask = _raster_mask(descriptor, spec.n)
    else:
        mask = _binary_mask(descriptor, spec.n)
    return PhaseObject(RealField(spec, mask * h), dict(descriptor), float(h))


def apply_phase_object(field: ComplexField, obj: PhaseObject) -> ComplexField:
    if field.spec != obj.map.spec:
        raise ValueError("phase object and field are sampled on different grids")
    return ComplexField(field.spec, field.values * np.exp(1j * obj.map.values))


# ---------------------------------------------------------------- propagation

def far_field_grid(spec: GridSpec, f: float) -> GridSpec:
    return GridSpec(n=spec.n, extent=spec.wavelength * f / spec.pitch,
                    wavelength=spec.wavelength)


def lens_far_field(field: ComplexField, f: float) -> ComplexField:
    """Field at the back focal plane of a thin lens (f-f).

    A centered unitary DFT; amplitudes are rescaled by the pitch ratio so the
    physical power ``sum |u|^2 pitch^2`` is unchanged.
    """
    out_spec = far_field_grid(field.spec, f)
    values = sfft.fftshift(sfft.fft2(sfft.ifftshift(field.values), norm="ortho"))
    return ComplexField(out_spec, values * (field.spec.pitch / out_spec.pitch))


def max_safe_distance(spec: GridSpec) -> float:
    """Largest |z| for which the Fresnel chirp is sampled without aliasing."""
    q_max = spec.n / (2 * spec.extent)
    return spec.extent / (2 * spec.wavelength * q_max)


def fresnel_transfer(spec: GridSpec, z: float) -> np.ndarray:
    """Paraxial transfer function ``exp(-i pi lambda z |q|^2)`` (FFT layout)."""
    limit = max_safe_distance(spec)
    if abs(z) >= limit:
        raise PropagationError(
            f"|z| = {abs(z):.3e} m aliases the Fresnel transfer function on this grid; "
            f"maximum safe |z| is {limit:.3e} m"
        )
    q2 = frequency_grid(spec.n, spec.extent).q2
    return np.exp(-1j * np.pi * spec.wavelength * z * q2)


def fresnel_propagate(field: ComplexField, z: float) -> ComplexField:
    if z == 0:
        return ComplexField(field.spec, field.values.copy())
    h = fresnel_transfer(field.spec, z)
    spectrum = sfft.fft2(field.values, norm="ortho")
    return ComplexField(field.spec, sfft.ifft2(spectrum * h, norm="ortho"))


def invert_image(values: np.ndarray) -> np.ndarray:
    """Ideal imaging x -> -x about the grid origin at index n // 2."""
    flipped = np.flip(values, axis=(-2, -1))
    return np.roll(flipped, 1 - values.shape[-1] % 2, axis=(-2, -1))


# ---------------------------------------------------------------- ensembles

def _abs2(u):
    return u.real**2 + u.imag**2


def accumulate_intensities(source: SourceModel, f: float, dz_list: Sequence[float],
                           obj: PhaseObject, modes: Iterable[int] | None = None) -> dict:
    """Unnormalized incoherent sums over ``modes`` at the object-image plane.

    Returns arrays in object-plane orientation (no inversion):
    ``probe_focus``, ``reference_focus`` of shape ``(n, n)`` and ``probe``,
    ``reference`` of shape ``(len(dz_list), 2, n, n)`` holding the
    ``(-dz, +dz)`` planes.
    """
    obj_spec = obj.map.spec
    ff = far_field_grid(source.spec, f)
    if ff.n != obj_spec.n or not np.isclose(ff.extent, obj_spec.extent, rtol=1e-9):
        raise ValueError("source grid does not map onto the phase-object grid through the lens")
    modes = range(source.modes) if modes is None else modes
    n = obj_spec.n
    amp = envelope(source.spec, source.waist)
    lens_gain = source.spec.pitch / obj_spec.pitch
    object_factor = np.exp(1j * obj.map.values)
    ndz = len(dz_list)
    acc = {
        "probe_focus": np.zeros((n, n)),
        "reference_focus": np.zeros((n, n)),
        "probe": np.zeros((ndz, 2, n, n)),
        "reference": np.zeros((ndz, 2, n, n)),
    }
    transfers = None
    count = 0
    for m in modes:
        try:
            if transfers is None:
                transfers = [fresnel_transfer(obj_spec, dz) for dz in dz_list]
            u = amp * np.exp(1j * mode_phase(source, m))
            far = sfft.fftshift(sfft.fft2(sfft.ifftshift(u), norm="ortho")) * lens_gain
            probe = far * object_factor
            acc["probe_focus"] += _abs2(probe)
            acc["reference_focus"] += _abs2(far)
            if transfers:
                p_spec = sfft.fft2(probe, norm="ortho")
                r_spec = sfft.fft2(far, norm="ortho")
            for j, h in enumerate(transfers):
                hc = h.conj()
                stack = np.stack([p_spec * hc, p_spec * h, r_spec * hc, r_spec * h])
                planes = _abs2(sfft.ifft2(stack, norm="ortho", axes=(-2, -1)))
                acc["probe"][j] += planes[:2]
                acc["reference"][j] += planes[2:]
        except PropagationError as exc:
            raise PropagationError(f"mode {m}: {exc}") from exc
        count += 1
    acc["modes"] = count
    return acc


def simulate_triples(source: SourceModel, f: float, dz_list: Sequence[float],
                     obj: PhaseObject, mean_photons: float) -> list[BeamTriples]:
    """One ensemble pass shared by every defocus distance in ``dz_list``.

    All frames are scaled by a single factor so that the on-focus reference
    frame averages ``mean_photons`` per propagation pixel.
    """
    if not mean_photons > 0:
        raise ValueError(f"mean_photons must be positive, got {mean_photons}")
    acc = accumulate_intensities(source, f, dz_list, obj)
    scale = mean_photons / acc["reference_focus"].mean()
    p0 = invert_image(acc["probe_focus"]) * scale
    r0 = invert_image(acc["reference_focus"]) * scale
    out = []
    for j, dz in enumerate(dz_list):
        pm, pp = invert_image(acc["probe"][j]) * scale
        rm, rp = invert_image(acc["reference"][j]) * scale
        out.append(BeamTriples(
            spec=obj.map.spec, dz=float(dz),
            probe=np.stack([pm, p0, pp]), reference=np.stack([rm, r0, rp]),
            mean_photons=float(mean_photons), modes=acc["modes"],
            meta={"scale": scale},
        ))
    return out


def simulate_focus(source: SourceModel, f: float, obj: PhaseObject,
                   mean_photons: float) -> BeamTriples:
    """On-focus frames only, repeated on all three planes (``dz = 0``).

    Useful for noise statistics: the detector draws independent noise on
    each plane, so the three copies act as three realizations.
    """
    if not mean_photons > 0:
        raise ValueError(f"mean_photons must be positive, got {mean_photons}")
    acc = accumulate_intensities(source, f, [], obj)
    scale = mean_photons / acc["reference_focus"].mean()
    p0 = invert_image(acc["probe_focus"]) * scale
    r0 = invert_image(acc["reference_focus"]) * scale
    return BeamTriples(spec=obj.map.spec, dz=0.0, probe=np.stack([p0] * 3),
                       reference=np.stack([r0] * 3), mean_photons=float(mean_photons),
                       modes=acc["modes"], meta={"scale": scale})


def simulate_triple(source: SourceModel, train: OpticalTrain, obj: PhaseObject,
                    mean_photons: float) -> BeamTriples:
    return simulate_triples(source, train.f, [train.dz], obj, mean_photons)[0]


def image_plane_truth(obj: PhaseObject) -> np.ndarray:
    """Ground-truth phase as seen through the inverting imaging system."""
    return invert_image(obj.map.values)
