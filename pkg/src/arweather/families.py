"""Tag family definition: codebook, cell layout and rotation algebra.

The default family follows the ``tagStandard41h12`` parameters: 41 data
bits with pairwise Hamming distance >= 12 under all four in-plane
rotations. The layout is the 9x9-cell "standard" arrangement:

    ring 0 (outermost, 32 cells)   data bits
    ring 1 (24 cells)              solid black border
    ring 2 (16 cells)              solid white border
    center 3x3 (9 cells)           data bits

The border square that detectors lock onto is the black/white boundary
between rings 1 and 2, i.e. 5 cells wide; its interior is light
("reversed" border). Canonical tag coordinates place that square on
[-1/2, +1/2]^2 with +x right and +y down (z into the tag face, so a tag
viewed head-on has the identity rotation), one cell is 0.2 units and the
full 9-cell graphic spans [-0.9, +0.9]^2.

Codebooks are plain text assets: one hex codeword per line, the line
number is the tag id. Bit 0 of a codeword is the most significant bit;
a set bit renders as a white cell.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ArWeatherError

DEFAULT_FAMILY_NAME = "tagStandard41h12"
_FAMILY_NAME_RE = re.compile(r"^tagStandard(\d+)h(\d+)")


class CodebookError(ArWeatherError):
    """Codebook asset is missing, malformed, or violates family invariants."""


@dataclass(frozen=True)
class TagLayout:
    """Cell geometry of the standard 9x9 layout."""

    total_width: int
    border_width: int
    data_cells: tuple  # ((row, col), ...) in bit order, row 0 = top
    black_border_cells: tuple
    white_border_cells: tuple

    @property
    def cell_size(self) -> float:
        """Cell edge length in canonical units (border square = 1)."""
        return 1.0 / self.border_width

    @property
    def half_extent(self) -> float:
        """Half-width of the full graphic in canonical units."""
        return 0.5 * self.total_width * self.cell_size

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        """Canonical (x, y) of a cell center; +x right, +y down."""
        mid = (self.total_width - 1) / 2.0
        return ((col - mid) * self.cell_size, (row - mid) * self.cell_size)

    def cell_centers(self, cells) -> np.ndarray:
        return np.array([self.cell_center(r, c) for r, c in cells])

    @cached_property
    def rotation_permutation(self) -> np.ndarray:
        """perm such that rotating the tag 90 deg CCW maps bit perm[j] to slot j."""
        index_of = {cell: i for i, cell in enumerate(self.data_cells)}
        n = self.total_width - 1
        perm = np.empty(len(self.data_cells), dtype=np.int64)
        for j, (r, c) in enumerate(self.data_cells):
            # Cell that lands on (r, c) after a 90 deg CCW tag rotation.
            perm[j] = index_of[(c, n - r)]
        return perm


def _ring(width: int, ring: int):
    lo, hi = ring, width - 1 - ring
    cells = []
    for r in range(lo, hi + 1):
        for c in range(lo, hi + 1):
            if min(r, c, width - 1 - r, width - 1 - c) == ring:
                cells.append((r, c))
    return cells


def _standard_layout(nbits: int) -> TagLayout:
    if nbits != 41:
        raise CodebookError(f"no standard layout defined for {nbits} data bits")
    width = 9
    center = [(r, c) for r in range(3, 6) for c in range(3, 6)]
    data = sorted(_ring(width, 0) + center)
    return TagLayout(
        total_width=width,
        border_width=5,
        data_cells=tuple(data),
        black_border_cells=tuple(_ring(width, 1)),
        white_border_cells=tuple(_ring(width, 2)),
    )


@dataclass(frozen=True)
class TagFamily:
    """Immutable decoded-tag family: codebook plus cell layout."""

    name: str
    bits_per_tag: int
    min_hamming: int
    layout: TagLayout
    codebook: tuple

    def __post_init__(self):
        if len(set(self.codebook)) != len(self.codebook):
            raise CodebookError("codebook contains duplicate codewords")

    def __len__(self) -> int:
        return len(self.codebook)

    def rotate_code(self, code: int, quarter_turns: int = 1) -> int:
        """Codeword as seen after rotating the tag 90*k degrees CCW."""
        perm = self.layout.rotation_permutation
        bits = code_to_bits(code, self.bits_per_tag)
        for _ in range(quarter_turns % 4):
            bits = bits[perm]
        return bits_to_code(bits)

    def code_rotations(self, code: int) -> list[int]:
        out = [code]
        for _ in range(3):
            out.append(self.rotate_code(out[-1]))
        return out

    def pattern(self, tag_id: int) -> np.ndarray:
        """Full 9x9 cell intensities (uint8, 0 or 255) for a tag id."""
        if not (0 <= tag_id < len(self.codebook)):
            raise CodebookError(
                f"tag id {tag_id} outside codebook range 0..{len(self.codebook) - 1}"
            )
        w = self.layout.total_width
        cells = np.zeros((w, w), dtype=np.uint8)
        for r, c in self.white_cells_solid():
            cells[r, c] = 255
        bits = code_to_bits(self.codebook[tag_id], self.bits_per_tag)
        for bit, (r, c) in zip(bits, self.layout.data_cells):
            cells[r, c] = 255 if bit else 0
        return cells

    def white_cells_solid(self) -> tuple:
        return self.layout.white_border_cells

    def verify_min_hamming(self) -> None:
        """Check the rotation-closed pairwise distance invariant.

        Quadratic in codebook size; intended for the shipped test subset,
        not the full production list.
        """
        n = len(self.codebook)
        codes = np.array(self.codebook, dtype=np.uint64)
        for i in range(n):
            rots = self.code_rotations(self.codebook[i])
            for k, rot in enumerate(rots):
                d = np.bitwise_count(codes ^ np.uint64(rot))
                if k == 0:
                    d[i] = self.min_hamming  # distance to itself is trivially 0
                if int(d.min()) < self.min_hamming:
                    j = int(d.argmin())
                    raise CodebookError(
                        f"codewords {i} (rotated {90 * k} deg) and {j} differ by "
                        f"{int(d.min())} bits < required {self.min_hamming}"
                    )


def code_to_bits(code: int, nbits: int) -> np.ndarray:
    """MSB-first bit vector of a codeword."""
    return np.array([(code >> (nbits - 1 - i)) & 1 for i in range(nbits)], dtype=np.uint8)


def bits_to_code(bits: np.ndarray) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def parse_family_name(name: str) -> tuple[int, int]:
    m = _FAMILY_NAME_RE.match(name)
    if not m:
        raise CodebookError(f"unrecognized family name {name!r}")
    return int(m.group(1)), int(m.group(2))


def load_family(path, name: str | None = None, verify: bool | None = None) -> TagFamily:
    """Load a codebook asset; ``verify`` defaults to on for <= 64 entries."""
    path = Path(path)
    if name is None:
        name = path.stem
    nbits, min_hamming = parse_family_name(name)
    codebook = []
    try:
        text = path.read_text(encoding="ascii")
    except OSError as e:
        raise CodebookError(f"cannot read codebook {path}: {e}") from e
    for lineno, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line:
            continue
        try:
            code = int(line, 16)
        except ValueError as e:
            raise CodebookError(f"{path}:{lineno + 1}: not a hex codeword: {line!r}") from e
        if code >> nbits:
            raise CodebookError(f"{path}:{lineno + 1}: codeword exceeds {nbits} bits")
        codebook.append(code)
    if not codebook:
        raise CodebookError(f"{path}: empty codebook")
    family = TagFamily(
        name=name,
        bits_per_tag=nbits,
        min_hamming=min_hamming,
        layout=_standard_layout(nbits),
        codebook=tuple(codebook),
    )
    if verify is None:
        verify = len(codebook) <= 64
    if verify:
        family.verify_min_hamming()
    return family


def packaged_family_path(name: str = DEFAULT_FAMILY_NAME) -> Path:
    return Path(resources.files("arweather").joinpath(f"data/families/{name}.codes"))


def default_family() -> TagFamily:
    """The full packaged codebook (verification skipped; see test subset)."""
    return load_family(packaged_family_path(), name=DEFAULT_FAMILY_NAME, verify=False)


def subset_family() -> TagFamily:
    """16-entry packaged subset used for build-time invariant checks."""
    path = packaged_family_path(DEFAULT_FAMILY_NAME + "_test16")
    return load_family(path, name=DEFAULT_FAMILY_NAME + "_test16", verify=True)
