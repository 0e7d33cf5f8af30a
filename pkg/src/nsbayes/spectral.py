"""Divergence-free spectral fields on the 2*pi-periodic torus.

A velocity field is stored as one complex amplitude per wavenumber, taken
along the unit tangent direction perpendicular to the wavenumber.  Fields
stored this way are divergence free by construction, and the negative
Laplacian acts diagonally with eigenvalue ``|k|^2`` on each mode.

Conventions
-----------
* Wavenumbers follow the standard FFT layout ``{-M/2, ..., M/2 - 1}`` per
  dimension on an ``M x M`` lattice; the zero mode is excluded (fields are
  mean free).  Negation is understood modulo the lattice, so every mode has
  a conjugate partner; the three Nyquist-type modes pair with themselves
  and carry real amplitudes in a real-valued field.
* For each conjugate pair, one member is designated canonical and both
  members share the tangent vector of the canonical one.  With this choice
  a real-valued physical field has Hermitian amplitudes,
  ``a[-k] == conj(a[k])``.
* Each complex mode, as a basis function ``tangent * exp(i k.x) / (2 pi)``,
  has unit L2 norm on ``[0, 2 pi]^2``.  The squared L2 norm of a field is
  therefore the plain sum of ``|a_k|^2`` over the lattice, and per-mode
  standard deviations of Gaussian measures can be used without extra
  normalisation factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * np.pi


class WavenumberLattice:
    """Truncated wavenumber lattice of an ``M x M`` Fourier grid.

    Precomputes eigenvalues, tangent directions, dealiasing masks and the
    index bookkeeping needed to enforce conjugate symmetry.  Instances are
    immutable after construction and safe to share between threads.
    """

    def __init__(self, modes_per_dim: int):
        if modes_per_dim % 2 != 0 or modes_per_dim < 4:
            raise ConfigError(
                f"modes_per_dim must be an even integer >= 4, got {modes_per_dim}"
            )
        m = int(modes_per_dim)
        self.modes_per_dim = m

        freq = np.fft.fftfreq(m, 1.0 / m).astype(int)
        k1, k2 = np.meshgrid(freq, freq, indexing="ij")
        self.k1 = k1
        self.k2 = k2
        lam = (k1 * k1 + k2 * k2).astype(float)
        self.eigenvalues = lam
        self.mode_mask = lam > 0.0

        idx = np.arange(m)
        self._neg_index = (-idx) % m
        i1, i2 = np.meshgrid(idx, idx, indexing="ij")
        j1, j2 = self._neg_index[i1], self._neg_index[i2]
        canonical = (i1 < j1) | ((i1 == j1) & (i2 <= j2))
        self.canonical = canonical
        self.self_paired = (i1 == j1) & (i2 == j2) & self.mode_mask

        safe = np.where(self.mode_mask, lam, 1.0)
        knorm = np.sqrt(safe)
        self.knorm = np.where(self.mode_mask, knorm, 0.0)
        tx = (-k2) / knorm
        ty = k1 / knorm
        # Conjugate partners share the canonical member's tangent vector.
        # For ordinary pairs this equals the mirrored perpendicular; on the
        # Nyquist rows/columns (where lattice negation does not negate the
        # frequency label) sharing is what keeps grid transforms of
        # Hermitian amplitudes exactly real.
        tx = np.where(canonical, tx, tx[np.ix_(self._neg_index, self._neg_index)])
        ty = np.where(canonical, ty, ty[np.ix_(self._neg_index, self._neg_index)])
        tx[~self.mode_mask] = 0.0
        ty[~self.mode_mask] = 0.0
        self.tangent = np.stack([tx, ty])

        # 2/3-rule mask for quadratic products; strict bound so that no
        # aliased image of a retained product mode lands in the kept band.
        self.dealias_bound = (m - 1) // 3
        self.dealias = (np.abs(k1) <= self.dealias_bound) & (
            np.abs(k2) <= self.dealias_bound
        )

    # -- bookkeeping -----------------------------------------------------

    @property
    def n_modes(self) -> int:
        """Number of retained wavenumbers (``M^2 - 1``)."""
        return self.modes_per_dim**2 - 1

    def conjugate_flip(self, arr: np.ndarray) -> np.ndarray:
        """Return ``arr`` evaluated at the negated wavenumbers.

        Acts on the trailing two axes, so stacked arrays (e.g. per-knot
        path values) flip knot by knot.
        """
        return arr[..., self._neg_index[:, None], self._neg_index[None, :]]

    def hermitianize(self, arr: np.ndarray) -> np.ndarray:
        """Project an array of per-mode values onto Hermitian symmetry."""
        return 0.5 * (arr + np.conj(self.conjugate_flip(arr)))

    def index_of(self, mode) -> tuple[int, int]:
        """Map a wavenumber pair ``(k1, k2)`` to its array index."""
        a, b = int(mode[0]), int(mode[1])
        half = self.modes_per_dim // 2
        if (a, b) == (0, 0):
            raise ConfigError("mode (0, 0) is not retained")
        if not (-half <= a < half and -half <= b < half):
            raise ConfigError(
                f"mode {(a, b)} outside lattice of size {self.modes_per_dim}"
            )
        return a % self.modes_per_dim, b % self.modes_per_dim

    def wavenumbers(self):
        """Retained wavenumbers in lexicographic ``(k1, k2)`` order."""
        half = self.modes_per_dim // 2
        out = []
        for a in range(-half, half):
            for b in range(-half, half):
                if (a, b) != (0, 0):
                    out.append((a, b))
        return out

    def grid(self):
        """Collocation grid coordinates ``X, Y`` with spacing ``2 pi / M``."""
        x = TWO_PI * np.arange(self.modes_per_dim) / self.modes_per_dim
        return np.meshgrid(x, x, indexing="ij")

    def compatible_with(self, other: "WavenumberLattice") -> bool:
        return self.modes_per_dim == other.modes_per_dim


def build_lattice(modes_per_dim: int) -> WavenumberLattice:
    """Construct the lattice for an ``M x M`` grid; ``M`` even and >= 4."""
    return WavenumberLattice(modes_per_dim)


@dataclass
class SpectralField:
    """Divergence-free velocity field as per-mode tangent amplitudes.

    Attributes:
        lattice: The wavenumber lattice the coefficients live on.
        coeffs: Complex array of shape ``(M, M)`` in FFT index order.
    """

    lattice: WavenumberLattice
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.complex128)
        m = self.lattice.modes_per_dim
        if arr.shape != (m, m):
            raise ConfigError(
                f"coefficient array shape {arr.shape} does not match lattice {m}"
            )
        arr = arr.copy()
        arr[0, 0] = 0.0  # mean-zero by construction
        self.coeffs = arr

    def copy(self) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs.copy())

    @classmethod
    def zeros(cls, lattice: WavenumberLattice) -> "SpectralField":
        m = lattice.modes_per_dim
        return cls(lattice, np.zeros((m, m), dtype=np.complex128))


@dataclass
class PhysicalField:
    """Grid values on the uniform collocation grid of ``[0, 2 pi)^2``.

    ``values`` has shape ``(M, M, 2)`` for a velocity field or ``(M, M)``
    for a scalar such as vorticity; entries are real.
    """

    lattice: WavenumberLattice
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        m = self.lattice.modes_per_dim
        if vals.shape not in ((m, m, 2), (m, m)):
            raise ConfigError(
                f"grid array shape {vals.shape} does not match lattice {m}"
            )
        self.values = vals


def leray_project(lattice: WavenumberLattice, raw: np.ndarray) -> SpectralField:
    """Project raw two-component mode coefficients onto divergence-free fields.

    Args:
        lattice: Target lattice.
        raw: Complex array of shape ``(2, M, M)``: per-mode coefficients of
            the two velocity components, in the same unit-norm convention
            as ``SpectralField`` amplitudes.

    Returns:
        Field with amplitude ``a_k = tangent_k . raw_k``.  Components along
        the wavenumber direction (gradient directions) are annihilated, and
        projecting twice equals projecting once.
    """
    raw = np.asarray(raw, dtype=np.complex128)
    m = lattice.modes_per_dim
    if raw.shape != (2, m, m):
        raise ConfigError(f"raw components must have shape (2, {m}, {m})")
    amp = raw[0] * lattice.tangent[0] + raw[1] * lattice.tangent[1]
    return SpectralField(lattice, amp)


def _component_spectra(u: SpectralField) -> np.ndarray:
    """Per-component Fourier coefficients of the velocity, shape (2, M, M)."""
    return u.coeffs * u.lattice.tangent / TWO_PI


def to_physical(u: SpectralField) -> PhysicalField:
    """Evaluate a spectral field on the collocation grid.

    The imaginary part of the transform (zero up to roundoff for fields
    with Hermitian amplitudes) is discarded; use ``reality_defect`` to
    measure it.
    """
    m = u.lattice.modes_per_dim
    spectra = _component_spectra(u)
    grid = np.fft.ifft2(spectra, axes=(-2, -1)).real * m**2
    return PhysicalField(u.lattice, np.stack([grid[0], grid[1]], axis=-1))


def to_spectral(phys: PhysicalField) -> SpectralField:
    """Inverse of ``to_physical`` for divergence-free, mean-free input.

    Arbitrary grid input is Leray-projected: gradient and mean components
    are dropped, so ``to_spectral(to_physical(u))`` recovers ``u`` exactly
    while general input loses its non-solenoidal part.
    """
    vals = phys.values
    if vals.ndim != 3:
        raise ConfigError("to_spectral expects a two-component velocity field")
    lattice = phys.lattice
    m = lattice.modes_per_dim
    spectra = np.fft.fft2(np.moveaxis(vals, -1, 0), axes=(-2, -1)) / m**2
    return leray_project(lattice, TWO_PI * spectra)


def reality_defect(u: SpectralField) -> float:
    """Relative magnitude of the imaginary part of the grid transform."""
    m = u.lattice.modes_per_dim
    grid = np.fft.ifft2(_component_spectra(u), axes=(-2, -1)) * m**2
    scale = np.max(np.abs(grid))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(grid.imag)) / scale)


def sobolev_norm(u: SpectralField, s: float) -> float:
    """Sobolev norm ``(sum_k |k|^(2s) |a_k|^2)^(1/2)`` over all retained modes.

    ``s = 0`` gives the L2 norm of the velocity field and matches the
    grid-quadrature norm exactly (Parseval).
    """
    lat = u.lattice
    lam = np.where(lat.mode_mask, lat.eigenvalues, 1.0)
    weights = np.where(lat.mode_mask, lam**s, 0.0)
    return float(np.sqrt(np.sum(weights * np.abs(u.coeffs) ** 2)))


def grid_l2_norm(phys: PhysicalField) -> float:
    """Trapezoid-free quadrature L2 norm ``(dx^2 sum |u|^2)^(1/2)``."""
    m = phys.lattice.modes_per_dim
    dx2 = (TWO_PI / m) ** 2
    return float(np.sqrt(dx2 * np.sum(phys.values**2)))


def nonlinear_term(u: SpectralField) -> SpectralField:
    """Divergence-free projection of the self-advection ``(u . grad) u``.

    Computed pseudo-spectrally: inputs are truncated by the 2/3 rule,
    derivatives are taken spectrally, products on the grid, and the result
    is truncated again and Leray-projected.  The integrator uses the
    *negative* of this term as its tendency contribution.
    """
    lat = u.lattice
    m = lat.modes_per_dim
    spectra = _component_spectra(u) * lat.dealias

    ik1 = 1j * lat.k1
    ik2 = 1j * lat.k2
    stack = np.stack(
        [
            spectra[0],
            spectra[1],
            ik1 * spectra[0],
            ik2 * spectra[0],
            ik1 * spectra[1],
            ik2 * spectra[1],
        ]
    )
    grids = np.fft.ifft2(stack, axes=(-2, -1)).real * m**2
    ux, uy, dux_dx, dux_dy, duy_dx, duy_dy = grids

    adv_x = ux * dux_dx + uy * dux_dy
    adv_y = ux * duy_dx + uy * duy_dy

    adv_spec = np.fft.fft2(np.stack([adv_x, adv_y]), axes=(-2, -1)) / m**2
    adv_spec *= lat.dealias
    return leray_project(lat, TWO_PI * adv_spec)


def inner_product(u: SpectralField, v: SpectralField) -> float:
    """L2 inner product of two real-valued fields from their amplitudes."""
    return float(np.sum(u.coeffs * np.conj(v.coeffs)).real)


def vorticity(u: SpectralField) -> PhysicalField:
    """Scalar vorticity (curl) of the velocity on the collocation grid.

    Per canonical mode the vorticity coefficient is ``i |k| a_k``; the
    conjugate partner carries the opposite orientation so the grid field
    stays real.
    """
    lat = u.lattice
    m = lat.modes_per_dim
    orientation = np.where(lat.canonical, 1.0, -1.0) * lat.knorm
    # Self-conjugate Nyquist modes have a curl proportional to a Nyquist
    # sine, which vanishes at every collocation point.
    orientation = np.where(lat.self_paired, 0.0, orientation)
    w_spec = 1j * orientation * u.coeffs / TWO_PI
    grid = np.fft.ifft2(w_spec).real * m**2
    return PhysicalField(lat, grid)


def basis_field(
    lattice: WavenumberLattice,
    mode,
    kind: str = "cos",
    amplitude: float = 1.0,
) -> SpectralField:
    """Real orthonormal basis field for one wavenumber.

    Args:
        lattice: Target lattice.
        mode: Wavenumber pair ``(k1, k2)``.
        kind: ``"cos"`` or ``"sin"`` phase relative to the given mode.
        amplitude: L2 norm of the returned field.

    Returns:
        The field ``amplitude * tangent * cos(k.x) / (sqrt(2) pi)`` (or the
        sine analogue), which has L2 norm ``amplitude`` exactly.
    """
    if kind not in ("cos", "sin"):
        raise ConfigError(f"kind must be 'cos' or 'sin', got {kind!r}")
    i1, i2 = lattice.index_of(mode)
    field = SpectralField.zeros(lattice)
    if lattice.self_paired[i1, i2]:
        if kind == "sin":
            raise ConfigError(
                f"mode {tuple(mode)} is self-conjugate on this grid; only the "
                "cosine phase exists"
            )
        field.coeffs[i1, i2] = amplitude
        return field
    j1 = lattice._neg_index[i1]
    j2 = lattice._neg_index[i2]
    half = amplitude / np.sqrt(2.0)
    if kind == "cos":
        field.coeffs[i1, i2] = half
        field.coeffs[j1, j2] = half
    else:
        field.coeffs[i1, i2] = -1j * half
        field.coeffs[j1, j2] = 1j * half
    return field


def write_field(path, u: SpectralField) -> None:
    """Write a field snapshot: ``nsb-field v1 <M>`` then ``k1 k2 re im`` rows.

    Rows are ordered lexicographically by ``(k1, k2)`` and values carry 17
    significant digits, enough for exact float64 round trips.
    """
    lat = u.lattice
    lines = [f"nsb-field v1 {lat.modes_per_dim}"]
    for k1, k2 in lat.wavenumbers():
        c = u.coeffs[lat.index_of((k1, k2))]
        lines.append(f"{k1} {k2} {c.real:.17g} {c.imag:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(path) -> SpectralField:
    """Read a field snapshot written by ``write_field``."""
    from .errors import StorageError

    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != "nsb-field" or header[1] != "v1":
            raise StorageError(f"{path}: not an nsb-field v1 file")
        lattice = build_lattice(int(header[2]))
        field = SpectralField.zeros(lattice)
        count = 0
        for line in fh:
            if not line.strip():
                continue
            k1, k2, re, im = line.split()
            idx = lattice.index_of((int(k1), int(k2)))
            field.coeffs[idx] = complex(float(re), float(im))
            count += 1
    if count != lattice.n_modes:
        raise StorageError(
            f"{path}: expected {lattice.n_modes} records, found {count}"
        )
    return field
