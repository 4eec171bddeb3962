"""Random-dot stereo scenes with exact ground truth.

Scene geometry is defined in left-image coordinates. Each layer is a region
(full frame, axis-aligned rectangle or disc) carrying a disparity plane
``d = a*x + b*y + c`` and its own dot texture, which moves with the surface.
Layers are listed nearest first. A right-image pixel ``x_r`` sees the
surface point at left coordinate ``x_l`` solving ``x_l - d(x_l, y) = x_r``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

SUPERSAMPLE = 4


@dataclass(frozen=True)
class Layer:
    shape: str = "full"          # full | rect | disc
    params: tuple = ()           # rect: (x0, y0, x1, y1); disc: (cx, cy, radius)
    plane: tuple = (0.0, 0.0, 0.0)

    def contains(self, x, y):
        if self.shape == "full":
            return np.ones(np.broadcast(x, y).shape, dtype=bool)
        if self.shape == "rect":
            x0, y0, x1, y1 = self.params
            return (x >= x0) & (x < x1) & (y >= y0) & (y < y1)
        if self.shape == "disc":
            cx, cy, rad = self.params
            return (x - cx) ** 2 + (y - cy) ** 2 < rad ** 2
        raise InvalidInputError(f"unknown layer shape {self.shape!r}")

    def disparity(self, x, y):
        a, b, c = self.plane
        return a * x + b * y + c

    def left_coordinate(self, x_r, y):
        a, b, c = self.plane
        return (x_r + b * y + c) / (1.0 - a)


@dataclass(frozen=True)
class SceneSpec:
    width: int = 256
    height: int = 256
    layers: tuple = (Layer(),)
    density: float = 0.5
    noise: float = 0.0
    seed: int = 0
    dot_size: float = 1.0

    def validate(self):
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("scene must have positive size")
        if not 0.0 < self.density <= 1.0:
            raise InvalidInputError("density must lie in (0, 1]")
        if not self.layers:
            raise InvalidInputError("scene needs at least one layer")
        if self.dot_size <= 0:
            raise InvalidInputError("dot_size must be > 0")
        for layer in self.layers:
            a = layer.plane[0]
            if a >= 1.0:
                raise InvalidInputError("plane slope a must be < 1")
            xs = np.array([0.0, self.width - 1.0])
            ys = np.array([0.0, self.height - 1.0])
            corners = layer.disparity(xs[:, None], ys[None, :])
            if corners.min() < 0 or corners.max() >= self.width / 4:
                raise InvalidInputError("layer disparities must lie in [0, width/4)")


@dataclass
class Scene:
    left: np.ndarray
    right: np.ndarray
    gt_left: np.ndarray
    gt_right: np.ndarray
    occlusion: np.ndarray  # left-view pixels whose match is hidden or out of frame
    spec: SceneSpec = field(repr=False, default=None)


class _Texture:
    """Dot lattice in surface coordinates: cells of ``dot_size`` pixels."""

    def __init__(self, rng, width, height, dot_size, density, margin):
        self.dot = dot_size
        self.margin = margin
        nx = int(np.ceil((width + 2 * margin) / dot_size)) + 2
        ny = int(np.ceil((height + 2 * margin) / dot_size)) + 2
        on = rng.random((ny, nx)) < density
        self.cells = np.where(on, rng.uniform(64.0, 255.0, size=(ny, nx)), 16.0)

    def sample(self, x, y):
        ix = np.clip(np.floor((x + self.margin) / self.dot).astype(np.int64), 0, self.cells.shape[1] - 1)
        iy = np.clip(np.floor((y + self.margin) / self.dot).astype(np.int64), 0, self.cells.shape[0] - 1)
        return self.cells[iy, ix]


def _visible_left(layers, x, y):
    idx = np.full(np.broadcast(x, y).shape, -1)
    for k in range(len(layers) - 1, -1, -1):
        idx = np.where(layers[k].contains(x, y), k, idx)
    return idx


def _visible_right(layers, x_r, y):
    idx = np.full(np.broadcast(x_r, y).shape, -1)
    xl = np.zeros(idx.shape)
    for k in range(len(layers) - 1, -1, -1):
        cand = layers[k].left_coordinate(x_r, y)
        hit = layers[k].contains(cand, y)
        idx = np.where(hit, k, idx)
        xl = np.where(hit, cand, xl)
    return idx, xl


def _render(layers, textures, xs, ys, right):
    out = np.zeros(np.broadcast(xs, ys).shape)
    if right:
        idx, xl = _visible_right(layers, xs, ys)
    else:
        idx, xl = _visible_left(layers, xs, ys), xs
    for k, tex in enumerate(textures):
        sel = idx == k
        if sel.any():
            out[sel] = tex.sample(np.broadcast_to(xl, sel.shape)[sel], np.broadcast_to(ys, sel.shape)[sel])
    return out


def generate_scene(spec: SceneSpec) -> Scene:
    spec.validate()
    layers = list(spec.layers)
    if not layers[-1].shape == "full":
        raise InvalidInputError("the last (farthest) layer must cover the full frame")
    rng = np.random.default_rng(spec.seed)
    margin = spec.width / 4 + 2
    textures = [_Texture(rng, spec.width, spec.height, spec.dot_size, spec.density, margin)
                for _ in layers]

    h, w = spec.height, spec.width
    n = SUPERSAMPLE
    sub = (np.arange(n) + 0.5) / n - 0.5
    ys = (np.arange(h)[:, None] + sub[None, :]).reshape(-1)[:, None]
    xs = (np.arange(w)[:, None] + sub[None, :]).reshape(-1)[None, :]
    left = _render(layers, textures, xs, ys, right=False).reshape(h, n, w, n).mean(axis=(1, 3))
    right = _render(layers, textures, xs, ys, right=True).reshape(h, n, w, n).mean(axis=(1, 3))
    if spec.noise > 0:
        left = left + rng.normal(scale=spec.noise, size=left.shape)
        right = right + rng.normal(scale=spec.noise, size=right.shape)
    left = np.clip(left, 0.0, 255.0)
    right = np.clip(right, 0.0, 255.0)

    py = np.arange(h, dtype=np.float64)[:, None]
    px = np.arange(w, dtype=np.float64)[None, :]
    vis_l = _visible_left(layers, px, py)
    gt_left = np.zeros((h, w))
    for k, layer in enumerate(layers):
        gt_left = np.where(vis_l == k, layer.disparity(px, py), gt_left)
    vis_r, xl_r = _visible_right(layers, px, py)
    gt_right = np.zeros((h, w))
    for k, layer in enumerate(layers):
        gt_right = np.where(vis_r == k, layer.disparity(xl_r, py), gt_right)

    # a left point is occluded when a nearer layer covers its right projection
    x_r = px - gt_left
    occluded = x_r < -0.5
    for k, layer in enumerate(layers):
        nearer = vis_l > k
        if not nearer.any():
            continue
        cover = layer.contains(layer.left_coordinate(x_r, py), py)
        occluded |= nearer & cover
    return Scene(left, right, gt_left, gt_right, occluded, spec)


def constant_scene(disparity, size=256, seed=0, **kw) -> SceneSpec:
    return SceneSpec(width=size, height=size, layers=(Layer(plane=(0.0, 0.0, float(disparity))),),
                     seed=seed, **kw)


def square_scene(fg, bg, size=256, seed=0, square=None, **kw) -> SceneSpec:
    """Foreground square at disparity ``fg`` over a fronto-parallel background."""
    if square is None:
        lo, hi = size * 3 // 8, size * 5 // 8
        square = (lo, lo, hi, hi)
    return SceneSpec(width=size, height=size,
                     layers=(Layer("rect", tuple(square), (0.0, 0.0, float(fg))),
                             Layer(plane=(0.0, 0.0, float(bg)))),
                     seed=seed, **kw)


def default_suite(n=10, size=256, d_max=32, seed=0, dot_size=2.0) -> list[SceneSpec]:
    """Seeded RDS scenes: constant-disparity ones and layered slanted planes.

    Every third scene is fronto-parallel with an integer disparity; the rest
    stack one or two rectangles or discs over a slanted background plane.
    Disparities stay within ``[2, 0.75 * d_max]``.
    """
    rng = np.random.default_rng(seed)
    hi = 0.75 * d_max
    specs = []
    for i in range(n):
        s = int(rng.integers(0, 2 ** 31))
        if i % 3 == 0:
            specs.append(constant_scene(int(rng.integers(2, int(hi) + 1)), size=size, seed=s,
                                        dot_size=dot_size))
            continue
        # background plane spanning part of [2, hi] across the frame
        d0 = rng.uniform(2.0, hi * 0.5)
        d1 = rng.uniform(2.0, hi * 0.5)
        a = (d1 - d0) / size * 0.5
        b = (d1 - d0) / size * 0.5
        bg = Layer(plane=(a, b, d0))
        layers = []
        for _ in range(int(rng.integers(1, 3))):
            d = rng.uniform(hi * 0.55, hi)
            if rng.random() < 0.5:
                x0, y0 = rng.uniform(0.2 * size, 0.6 * size, size=2)
                ext = rng.uniform(0.15 * size, 0.3 * size, size=2)
                layers.append(Layer("rect", (x0, y0, x0 + ext[0], y0 + ext[1]), (0.0, 0.0, d)))
            else:
                cx, cy = rng.uniform(0.3 * size, 0.7 * size, size=2)
                layers.append(Layer("disc", (cx, cy, rng.uniform(0.1, 0.2) * size), (0.0, 0.0, d)))
        specs.append(SceneSpec(width=size, height=size, layers=tuple(layers) + (bg,), seed=s,
                               dot_size=dot_size))
    return specs


def occluding_suite(n=10, size=256, d_max=32, seed=1, dot_size=2.0) -> list[SceneSpec]:
    rng = np.random.default_rng(seed)
    hi = 0.75 * d_max
    specs = []
    for _ in range(n):
        fg = float(rng.integers(int(hi * 0.6), int(hi) + 1))
        bg = float(rng.integers(2, int(hi * 0.35) + 1))
        side = int(rng.integers(size // 5, size // 3))
        x0, y0 = (int(v) for v in rng.integers(size // 4, size - size // 4 - side, size=2))
        specs.append(square_scene(fg, bg, size=size, seed=int(rng.integers(0, 2 ** 31)),
                                  square=(x0, y0, x0 + side, y0 + side), dot_size=dot_size))
    return specs


def growth_scene(resolution, reference=128, seed=0) -> SceneSpec:
    """A scene whose content scales with resolution (dots grow with it).

    Used for the growth experiment: doubling the resolution adds finer
    sampling of the same surfaces rather than new texture.
    """
    f = resolution / reference
    sq = (0.3 * resolution, 0.35 * resolution, 0.65 * resolution, 0.7 * resolution)
    return SceneSpec(width=resolution, height=resolution,
                     layers=(Layer("rect", sq, (0.0, 0.0, 12.0 * f)),
                             Layer(plane=(0.0, 0.0, 4.0 * f))),
                     seed=seed, dot_size=8.0 * f, density=0.5)
