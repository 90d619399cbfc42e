"""SIM codebooks for beam training and their on-disk format.

Narrow beams point at ``k / (2 N_axis)`` on one axis (the other axis gets a
flat "omni" pattern), so one set indexed by the integer ``k`` serves the
exhaustive grids and every sliding position.  Coded entries realize the seven
layer patterns of the (7,4) beam code as complementary wide-beam pairs.

File format (``.npz``, version 1)::

    header   JSON string: {"format": "simcomm-codebook", "version": 1,
             "geometry": <signature>, "geometry_params": {...},
             "antenna": int, "entries": [{"label", "axis", "kind",
             "coverage": [lo, hi], "residual", "angle", "bits"}, ...]}
    phases   float64 array (E, L, N, 2): interleaved real/imag parts
"""
from __future__ import annotations

import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import beamcode
from .geometry import ChannelSet, SimGeometry, propagate, random_stack, ula_vector
from .tscc import PdmmParams, ao_pdmm, desired_planar, gs_design, sample_grid

log = logging.getLogger(__name__)

FORMAT_NAME = "simcomm-codebook"
FORMAT_VERSION = 1
AXES = ("vartheta", "nu")


@dataclass(frozen=True)
class CodebookEntry:
    label: str
    axis: str
    kind: str  # "narrow", "coded" or "2d"
    stack: np.ndarray = field(repr=False)
    coverage: tuple = (-1.0, 1.0)
    residual: float = float("nan")
    angle: tuple = ()
    bits: tuple = ()


class Codebook:
    """Ordered, label-addressable collection of fitted phase stacks."""

    def __init__(self, geometry: SimGeometry, entries=(), antenna: int = 0):
        self.geometry = geometry
        self.antenna = antenna
        self._entries: dict[str, CodebookEntry] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: CodebookEntry):
        if entry.label in self._entries:
            raise ValueError(f"duplicate codebook label {entry.label!r}")
        lo, hi = entry.coverage
        if not -1 <= lo <= hi <= 1:
            raise ValueError(f"coverage {entry.coverage} outside [-1, 1]")
        self._entries[entry.label] = entry

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries.values())

    def __contains__(self, label):
        return label in self._entries

    def __getitem__(self, label) -> CodebookEntry:
        return self._entries[label]

    @property
    def labels(self):
        return list(self._entries)

    # -- serialization -----------------------------------------------------
    def save(self, path):
        entries = list(self)
        header = {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "geometry": self.geometry.signature(),
            "geometry_params": asdict(self.geometry),
            "antenna": self.antenna,
            "entries": [
                {
                    "label": e.label,
                    "axis": e.axis,
                    "kind": e.kind,
                    "coverage": list(e.coverage),
                    "residual": e.residual,
                    "angle": list(e.angle),
                    "bits": list(e.bits),
                }
                for e in entries
            ],
        }
        g = self.geometry
        phases = np.zeros((len(entries), g.num_layers, g.num_elements, 2))
        for i, e in enumerate(entries):
            phases[i] = np.stack([e.stack.real, e.stack.imag], axis=-1)
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(header)), phases=phases)

    @classmethod
    def load(cls, path, geometry: SimGeometry | None = None) -> "Codebook":
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["header"]))
            phases = data["phases"]
        if header.get("format") != FORMAT_NAME:
            raise ValueError(f"{path}: not a codebook file")
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported codebook version {header.get('version')}")
        stored = SimGeometry(**header["geometry_params"])
        if geometry is not None and geometry.signature() != header["geometry"]:
            raise ValueError(f"{path}: codebook was built for a different geometry")
        if stored.signature() != header["geometry"]:
            raise ValueError(f"{path}: geometry hash mismatch (corrupt header)")
        book = cls(geometry or stored, antenna=header["antenna"])
        for meta, ph in zip(header["entries"], phases):
            stack = ph[..., 0] + 1j * ph[..., 1]
            stack.setflags(write=False)
            book.add(
                CodebookEntry(
                    meta["label"], meta["axis"], meta["kind"], stack,
                    tuple(meta["coverage"]), meta["residual"], tuple(meta["angle"]),
                    tuple(meta["bits"]),
                )
            )
        return book


# ---------------------------------------------------------------------------
# labels and grids


def narrow_label(axis: str, k: int) -> str:
    return f"{axis}/narrow/{k}"


def coded_label(axis: str, layer: int, half: str) -> str:
    """``layer`` is 1-based; ``half`` is "a" (pattern) or "b" (complement)."""
    return f"{axis}/coded/{layer}{half}"


def planar_label(k1: int, k2: int) -> str:
    return f"2d/{k1}/{k2}"


def double_sampled_grid(n: int, oversample: int = 1) -> np.ndarray:
    """``(2i - n' + 1) / n'`` for ``n' = oversample * n``, i = 0..n'-1."""
    m = oversample * n
    return (2 * np.arange(m) - m + 1) / m


def half_step_index(angle: float, n: int) -> int:
    """Integer ``k`` with ``angle == k / (2 n)``, wrapped into [-2n, 2n)."""
    k = int(round(angle * 2 * n))
    return (k + 2 * n) % (4 * n) - 2 * n


def axis_length(geom: SimGeometry, axis: str) -> int:
    if axis == "vartheta":
        return geom.n1
    if axis == "nu":
        return geom.n2
    raise ValueError(f"unknown axis {axis!r}")


def _label_seed(seed: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, zlib.crc32(label.encode())])


# ---------------------------------------------------------------------------
# building


class CodebookBuilder:
    """Designs targets for a geometry and fits them with AO-PDMM.

    Each fit starts from seeded random phases derived from ``(seed, label)``
    and its target is scaled to the output norm of that initial stack, which
    keeps the target within reach of the lossy multi-layer structure.
    """

    def __init__(
        self,
        channels: ChannelSet,
        params: PdmmParams = PdmmParams(),
        seed: int = 0,
        antenna: int = 0,
        samples: int = 180,
        gs_iters: int = 200,
        threads: int = 1,
    ):
        self.channels = channels
        self.geometry = channels.geometry
        self.params = params
        self.seed = seed
        self.antenna = antenna
        self.grid = sample_grid(samples)
        self.gs_iters = gs_iters
        self.threads = threads
        self._omni = {}

    @property
    def w1(self):
        return self.channels.feeds[self.antenna]

    def omni(self, axis: str) -> np.ndarray:
        """Flat-gain beamformer for the axis not being trained."""
        if axis not in self._omni:
            m = axis_length(self.geometry, axis)
            res = gs_design(self.grid, np.ones_like(self.grid), m, self.gs_iters)
            self._omni[axis] = res.v / np.linalg.norm(res.v)
        return self._omni[axis]

    def narrow_target(self, axis: str, angle: float) -> np.ndarray:
        if axis == "vartheta":
            return desired_planar(ula_vector(angle, self.geometry.n1), self.omni("nu"))
        return desired_planar(self.omni("vartheta"), ula_vector(angle, self.geometry.n2))

    def mask_target(self, axis: str, gain: np.ndarray) -> np.ndarray:
        m = axis_length(self.geometry, axis)
        v = gs_design(self.grid, gain, m, self.gs_iters).v
        if axis == "vartheta":
            return desired_planar(v, self.omni("nu"))
        return desired_planar(self.omni("vartheta"), v)

    def fit(self, label: str, target: np.ndarray):
        """Fit ``target``; returns ``(stack, relative residual, AoResult)``."""
        g = self.geometry
        rng = np.random.default_rng(_label_seed(self.seed, label))
        init = random_stack(rng, g.num_layers, g.num_elements)
        reach = np.linalg.norm(propagate(self.channels.interlayer, init, self.w1))
        v = target / np.linalg.norm(target) * reach
        res = ao_pdmm(self.channels.interlayer, self.w1, v, init, self.params, strict=False)
        if not res.converged:
            log.info("%s: AO-PDMM stopped after %d sweeps", label, self.params.max_outer)
        return res.stack, res.residual / float(np.vdot(v, v).real), res

    def _fit_all(self, jobs):
        """Run ``(label, target_fn, meta)`` jobs, keeping job order."""
        def run(job):
            label, target_fn, meta = job
            stack, rel, _ = self.fit(label, target_fn())
            log.debug("fitted %s (residual %.3g)", label, rel)
            return CodebookEntry(label=label, stack=stack, residual=rel, **meta)

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(run, jobs))
        return [run(j) for j in jobs]

    # -- codebook kinds ----------------------------------------------------
    def narrow_entries(self, axis: str, ks) -> list:
        n = axis_length(self.geometry, axis)
        jobs = []
        for k in ks:
            angle = k / (2 * n)
            jobs.append(
                (
                    narrow_label(axis, k),
                    lambda a=angle: self.narrow_target(axis, a),
                    dict(
                        axis=axis, kind="narrow", angle=(angle,),
                        coverage=(max(-1.0, angle - 1 / n), min(1.0, angle + 1 / n)),
                    ),
                )
            )
        return self._fit_all(jobs)

    def coded_entries(self, axis: str, layers=range(1, 8)) -> list:
        region = beamcode.region_of_angle(self.grid)
        jobs = []
        for layer in layers:
            row = beamcode.LAYER_TABLE[layer - 1]
            for half, bit in (("a", 0), ("b", 1)):
                # scan "a" lights the regions whose layer bit is 0
                gain = (row[region - 1] == bit).astype(float)
                covered = np.flatnonzero(row == bit) + 1
                lo = float(beamcode.region_center(covered.min()) - 1 / 16)
                hi = float(beamcode.region_center(covered.max()) + 1 / 16)
                jobs.append(
                    (
                        coded_label(axis, layer, half),
                        lambda g=gain: self.mask_target(axis, g),
                        dict(
                            axis=axis, kind="coded", coverage=(lo, hi),
                            bits=tuple(int(b) for b in row),
                        ),
                    )
                )
        return self._fit_all(jobs)

    def planar_entries(self, pairs) -> list:
        """2-D pencil beams at ``(k1 / 2n1, k2 / 2n2)`` for each ``(k1, k2)``."""
        g = self.geometry
        jobs = []
        for k1, k2 in pairs:
            vt, nu = k1 / (2 * g.n1), k2 / (2 * g.n2)
            jobs.append(
                (
                    planar_label(k1, k2),
                    lambda a=vt, b=nu: desired_planar(ula_vector(a, g.n1), ula_vector(b, g.n2)),
                    dict(axis="2d", kind="2d", angle=(vt, nu)),
                )
            )
        return self._fit_all(jobs)

    def ensure(self, book: Codebook, entries_fn, labels):
        """Fit and add whichever of ``labels`` ``book`` is missing."""
        missing = [lab for lab in labels if lab not in book]
        if missing:
            for e in entries_fn(missing):
                book.add(e)


def grid_ks(n: int, oversample: int = 1) -> list:
    """Half-step indices of :func:`double_sampled_grid` points."""
    return [half_step_index(a, n) for a in double_sampled_grid(n, oversample)]


def sliding_ks(n: int) -> list:
    """Every half-step index: all positions the sliding stage can visit."""
    return list(range(-2 * n, 2 * n))


def build_exhaustive_codebook(
    channels: ChannelSet,
    params: PdmmParams = PdmmParams(),
    mode: str = "line",
    oversample: int = 1,
    seed: int = 0,
    threads: int = 1,
) -> Codebook:
    """One codeword per grid point per axis (``line``) or per grid pair (``2d``)."""
    g = channels.geometry
    builder = CodebookBuilder(channels, params, seed, threads=threads)
    k1 = grid_ks(g.n1, oversample)
    k2 = grid_ks(g.n2, oversample)
    if mode == "line":
        entries = builder.narrow_entries("vartheta", k1) + builder.narrow_entries("nu", k2)
    elif mode == "2d":
        entries = builder.planar_entries([(a, b) for a in k1 for b in k2])
    else:
        raise ValueError(f"unknown exhaustive mode {mode!r}")
    return Codebook(g, entries, builder.antenna)


def build_coded_codebook(
    channels: ChannelSet,
    axis: str | None = None,
    params: PdmmParams = PdmmParams(),
    seed: int = 0,
    threads: int = 1,
) -> Codebook:
    """Seven complementary wide-beam pairs per axis (both axes by default)."""
    builder = CodebookBuilder(channels, params, seed, threads=threads)
    axes = AXES if axis is None else (axis,)
    entries = [e for ax in axes for e in builder.coded_entries(ax)]
    return Codebook(channels.geometry, entries, builder.antenna)


def build_training_codebook(
    channels: ChannelSet,
    params: PdmmParams = PdmmParams(),
    seed: int = 0,
    threads: int = 1,
) -> Codebook:
    """Everything the single-path protocols need: coded pairs plus all narrow beams."""
    g = channels.geometry
    builder = CodebookBuilder(channels, params, seed, threads=threads)
    entries = []
    for axis in AXES:
        entries += builder.coded_entries(axis)
        entries += builder.narrow_entries(axis, sliding_ks(axis_length(g, axis)))
    return Codebook(g, entries, builder.antenna)


def load_or_build(path, channels: ChannelSet, build_fn, **kwargs) -> Codebook:
    """Reuse a codebook file if it matches the geometry, otherwise build and save it."""
    path = Path(path)
    if path.exists():
        try:
            return Codebook.load(path, channels.geometry)
        except ValueError as exc:
            log.warning("rebuilding %s: %s", path, exc)
    book = build_fn(channels, **kwargs)
    path.parent.mkdir(parents=True, exist_ok=True)
    book.save(path)
    return book


def cache_path(root, geometry: SimGeometry, params: PdmmParams, seed: int, tag: str) -> Path:
    """Cache file name keyed by geometry signature, solver parameters and seed."""
    key = zlib.crc32(json.dumps([asdict(params), seed], sort_keys=True).encode())
    return Path(root) / f"{tag}-{geometry.signature()}-{key:08x}.npz"


def axis_pattern(geom: SimGeometry, y: np.ndarray, axis: str, grid) -> np.ndarray:
    """Normalized energy radiated towards each ``grid`` angle of one axis.

    The other axis is integrated out; a beam pointing exactly at an angle
    scores ``1 / n`` there.
    """
    Y = np.asarray(y).reshape(geom.n1, geom.n2)
    if axis == "nu":
        Y = Y.T
    elif axis != "vartheta":
        raise ValueError(f"unknown axis {axis!r}")
    m = Y.shape[0]
    proj = ula_vector(np.asarray(grid, dtype=float), m).conj().T @ Y
    return np.sum(np.abs(proj) ** 2, axis=1) / (m * m * np.sum(np.abs(Y) ** 2))


def mask_contrast(geom: SimGeometry, y: np.ndarray, axis: str, gain, grid) -> float:
    """Mean pattern over the pass band divided by the mean over the stop band."""
    pat = axis_pattern(geom, y, axis, grid)
    on = np.asarray(gain) > 0.5
    return float(pat[on].mean() / pat[~on].mean())
