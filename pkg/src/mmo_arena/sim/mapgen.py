"""Seeded procedural maps: splitmix64 value noise, perimeter spawn anchors, text map files."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..config import ArenaConfig, Tile

MASK64 = (1 << 64) - 1
MAP_FORMAT = "mmo-arena-map"
MAP_VERSION = 1
KIND_CHARS = {Tile.GRASS: ".", Tile.FOREST: "F", Tile.WATER: "~", Tile.STONE: "#", Tile.BORDER: "X"}
CHAR_KINDS = {v: k for k, v in KIND_CHARS.items()}


class MapInfeasible(RuntimeError):
    pass


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _splitmix64_array(x: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    x = x + np.uint64(0x9E3779B97F4A7C15)
    z = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *salt: int) -> int:
    """Mix integers into a 64-bit seed; used for every sub-stream in the package."""
    h = splitmix64(seed & MASK64)
    for s in salt:
        h = splitmix64(h ^ (s & MASK64))
    return h


def value_noise(seed: int, size: int, cell: int, octaves: int = 2) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0, 1), shape (size, size)."""
    out = np.zeros((size, size))
    amp_total = 0.0
    amp = 1.0
    for octave in range(octaves):
        step = max(1, cell >> octave)
        n_lat = size // step + 2
        ii, jj = np.meshgrid(np.arange(n_lat, dtype=np.uint64), np.arange(n_lat, dtype=np.uint64), indexing="ij")
        key = np.uint64(derive_seed(seed, octave)) ^ (ii * np.uint64(0x100000001B3)) ^ (jj * np.uint64(0xC2B2AE3D27D4EB4F))
        lattice = (_splitmix64_array(key) >> np.uint64(11)).astype(np.float64) / float(1 << 53)

        coords = np.arange(size) / step
        i0 = np.floor(coords).astype(np.int64)
        f = coords - i0
        f = f * f * (3.0 - 2.0 * f)
        a = lattice[np.ix_(i0, i0)]
        b = lattice[np.ix_(i0, i0 + 1)]
        c = lattice[np.ix_(i0 + 1, i0)]
        d = lattice[np.ix_(i0 + 1, i0 + 1)]
        fr = f[:, None]
        fc = f[None, :]
        top = a + (b - a) * fc
        bot = c + (d - c) * fc
        out += amp * (top + (bot - top) * fr)
        amp_total += amp
        amp *= 0.5
    return out / amp_total


def perimeter_ring(size: int) -> list[tuple[int, int]]:
    """Clockwise list of the passable perimeter (ring just inside the border), from (1, 1)."""
    lo, hi = 1, size - 2
    ring = [(lo, c) for c in range(lo, hi)]
    ring += [(r, hi) for r in range(lo, hi)]
    ring += [(hi, c) for c in range(hi, lo, -1)]
    ring += [(r, lo) for r in range(hi, lo, -1)]
    return ring


def anchor_indices(ring_len: int, count: int, offset: int) -> list[int]:
    return [(offset + round(k * ring_len / count)) % ring_len for k in range(count)]


def nearest_tiles(size: int, anchor: tuple[int, int], k: int, allowed: np.ndarray | None = None) -> list[tuple[int, int]]:
    """The k interior tiles closest to anchor by (squared distance, row, col)."""
    r0, c0 = anchor
    radius = 1
    while True:
        rs = range(max(1, r0 - radius), min(size - 1, r0 + radius + 1))
        cs = range(max(1, c0 - radius), min(size - 1, c0 + radius + 1))
        cand = [
            ((r - r0) ** 2 + (c - c0) ** 2, r, c)
            for r in rs
            for c in cs
            if allowed is None or allowed[r, c]
        ]
        cand.sort()
        # all tiles within `radius` (euclidean) are guaranteed inside the scanned square
        inside = [t for t in cand if t[0] <= radius * radius]
        if len(inside) >= k or radius >= size:
            return [(r, c) for _, r, c in cand[:k]]
        radius *= 2


@dataclass
class GameMap:
    seed: int
    size: int
    tiles: np.ndarray  # (size, size) int8 of Tile values
    anchors: list[tuple[int, int]]
    attempts: int = 1

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.size}|{self.anchors}".encode())
        h.update(np.ascontiguousarray(self.tiles, dtype=np.int8).tobytes())
        return h.hexdigest()

    def passable(self) -> np.ndarray:
        return (self.tiles == Tile.GRASS) | (self.tiles == Tile.FOREST)

    def water_adjacent(self) -> np.ndarray:
        """Tiles with a Water tile among their four neighbours."""
        w = self.tiles == Tile.WATER
        adj = np.zeros_like(w)
        adj[1:, :] |= w[:-1, :]
        adj[:-1, :] |= w[1:, :]
        adj[:, 1:] |= w[:, :-1]
        adj[:, :-1] |= w[:, 1:]
        return adj

    # -- text file format -------------------------------------------------

    def dumps(self) -> str:
        lines = [
            f"{MAP_FORMAT} {MAP_VERSION}",
            f"seed {self.seed}",
            f"size {self.size}",
            "kinds " + " ".join(f"{KIND_CHARS[k]}={k.name.lower()}" for k in Tile),
            "anchors " + " ".join(f"{r},{c}" for r, c in self.anchors),
        ]
        for row in self.tiles:
            lines.append("".join(KIND_CHARS[Tile(int(v))] for v in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "GameMap":
        lines = text.splitlines()
        magic = lines[0].split()
        if len(magic) != 2 or magic[0] != MAP_FORMAT:
            raise ValueError("not a map file")
        if int(magic[1]) != MAP_VERSION:
            raise ValueError(f"unsupported map version {magic[1]}")
        seed = int(lines[1].split()[1])
        size = int(lines[2].split()[1])
        anchors = [tuple(int(v) for v in tok.split(",")) for tok in lines[4].split()[1:]]
        rows = lines[5 : 5 + size]
        if len(rows) != size or any(len(r) != size for r in rows):
            raise ValueError("map grid has wrong dimensions")
        tiles = np.array([[CHAR_KINDS[ch] for ch in row] for row in rows], dtype=np.int8)
        return cls(seed=seed, size=size, tiles=tiles, anchors=anchors)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "GameMap":
        return cls.loads(Path(path).read_text())


def _terrain(seed: int, config: ArenaConfig) -> np.ndarray:
    n = config.map_size
    tiles = np.full((n, n), Tile.GRASS, dtype=np.int8)
    interior = np.zeros((n, n), dtype=bool)
    interior[1:-1, 1:-1] = True
    n_interior = int(interior.sum())
    free = interior.copy()
    # water first, then stone, then forest, each taking the top noise quantile of what is left
    for salt, kind, frac in (
        (1, Tile.WATER, config.water_fraction),
        (2, Tile.STONE, config.stone_fraction),
        (3, Tile.FOREST, config.forest_fraction),
    ):
        noise = value_noise(derive_seed(seed, salt), n, config.noise_cell)
        k = int(round(frac * n_interior))
        if k == 0:
            continue
        flat = np.where(free.ravel(), noise.ravel(), -1.0)
        order = np.argsort(-flat, kind="stable")[:k]
        tiles.ravel()[order] = kind
        free.ravel()[order] = False
    tiles[0, :] = tiles[-1, :] = tiles[:, 0] = tiles[:, -1] = Tile.BORDER
    return tiles


def _main_landmass(tiles: np.ndarray) -> np.ndarray:
    """Mask of the largest 4-connected passable region."""
    passable = (tiles == Tile.GRASS) | (tiles == Tile.FOREST)
    labels, count = ndimage.label(passable)
    if count == 0:
        return passable
    sizes = np.bincount(labels.ravel())
    sizes[0] = 0
    return labels == int(sizes.argmax())


def _connect(tiles: np.ndarray, land: np.ndarray, anchor: tuple[int, int]) -> None:
    """Carve a 4-connected Grass corridor from ``anchor`` toward the centre until it meets ``land``."""
    n = tiles.shape[0]
    r, c = anchor
    cr = cc = n // 2
    while not land[r, c]:
        if tiles[r, c] not in (Tile.GRASS, Tile.FOREST):
            tiles[r, c] = Tile.GRASS
        if (r, c) == (cr, cc):
            break
        if abs(cr - r) >= abs(cc - c):
            r += 1 if cr > r else -1
        else:
            c += 1 if cc > c else -1


def _resources_near(tiles: np.ndarray, land: np.ndarray, anchor: tuple[int, int], radius: int) -> bool:
    """Anchor on the main landmass with reachable Forest and a reachable Water-side tile nearby."""
    r, c = anchor
    if not land[r, c]:
        return False
    win = (slice(max(0, r - radius), r + radius + 1), slice(max(0, c - radius), c + radius + 1))
    water = tiles == Tile.WATER
    shore = np.zeros_like(water)
    shore[1:] |= water[:-1]
    shore[:-1] |= water[1:]
    shore[:, 1:] |= water[:, :-1]
    shore[:, :-1] |= water[:, 1:]
    return bool((land & (tiles == Tile.FOREST))[win].any() and (land & shore)[win].any())


def generate_map(seed: int, config: ArenaConfig) -> GameMap:
    """Build a deterministic map and its team spawn anchors.

    Anchors sit on the ring just inside the border, evenly spaced with a seeded
    rotation. The team_size tiles nearest each anchor are cleared to Grass (Forest
    is kept, it is passable). Anchors cut off from the main passable region get a Grass corridor
    carved toward the centre. If any anchor then cannot reach Forest and a
    Water-side tile within
    ``config.resource_radius`` tiles the terrain is redrawn from a perturbed
    sub-seed, at most ``config.map_retries`` times.
    """
    n = config.map_size
    ring = perimeter_ring(n)
    for attempt in range(config.map_retries):
        sub = derive_seed(seed, 0x4D4150, attempt)
        tiles = _terrain(sub, config)
        offset = derive_seed(sub, 0x524F54) % len(ring)
        anchors = [ring[i] for i in anchor_indices(len(ring), config.team_count, offset)]
        for a in anchors:
            for r, c in nearest_tiles(n, a, config.team_size):
                if tiles[r, c] != Tile.FOREST:
                    tiles[r, c] = Tile.GRASS
        land = _main_landmass(tiles)
        cut_off = [a for a in anchors if not land[a]]
        for a in cut_off:
            _connect(tiles, land, a)
        if cut_off:
            land = _main_landmass(tiles)
        if all(_resources_near(tiles, land, a, config.resource_radius) for a in anchors):
            return GameMap(seed=seed, size=n, tiles=tiles, anchors=anchors, attempts=attempt + 1)
    raise MapInfeasible(f"no feasible map for seed {seed} after {config.map_retries} attempts")
