"""Deterministic rasterization of a series into line, area, bar and scatter charts.

Charts are drawn with integer geometry only (Bresenham segments, solid fills,
square markers), so a (values, spec) pair always yields the same pixels. Ink is
pure black or pure blue on a pure white canvas; the frame and ticks drawn in
``with_label`` mode are always black.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.config import ChartType, ColorMode, LabelMode

logger = logging.getLogger(__name__)

WHITE = (255, 255, 255)
BLACK = (0, 0, 0)
BLUE = (0, 0, 255)

LABEL_MARGIN = 6
TICK_COUNT = 5
TICK_LENGTH = 3
MANIFEST_NAME = "manifest.jsonl"


class ChartSpecError(ValueError):
    """Invalid rendering configuration or input series."""


class ChartSpec(BaseModel):
    """How one chart image is drawn."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    chart_type: ChartType = "line"
    color_mode: ColorMode = "mono"
    label_mode: LabelMode = "no_label"
    resolution: int = Field(128, ge=16)
    stroke_width: int = Field(1, ge=1)
    marker_size: int = Field(3, ge=1)

    @field_validator("marker_size")
    @classmethod
    def _odd_marker(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"marker_size must be odd, got {value}")
        return value

    @property
    def slug(self) -> str:
        return f"{self.chart_type}_{self.color_mode}_{self.label_mode}_{self.resolution}"

    @property
    def ink(self) -> tuple[int, int, int]:
        return BLUE if self.color_mode == "color" else BLACK


def make_spec(**kwargs) -> ChartSpec:
    """Build a ChartSpec, converting validation failures into ChartSpecError."""
    try:
        return ChartSpec(**kwargs)
    except ValidationError as exc:
        raise ChartSpecError(str(exc)) from exc


class Rect(NamedTuple):
    """Inclusive pixel bounds of the plotting area."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1


@dataclass
class RasterImage:
    """Row-major RGB raster, 8 bits per channel."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ChartSpecError(f"expected (H, W, 3) pixels, got {self.pixels.shape}")
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def pixel_sha256(self) -> str:
        return hashlib.sha256(self.pixels.tobytes()).hexdigest()

    def ink_mask(self) -> np.ndarray:
        return np.any(self.pixels != 255, axis=2)

    def to_array(self) -> np.ndarray:
        """Channel-first float32 view scaled to [0, 1]."""
        return self.pixels.transpose(2, 0, 1).astype(np.float32) / 255.0

    def to_png_bytes(self) -> bytes:
        buffer = io.BytesIO()
        Image.fromarray(self.pixels).save(buffer, format="PNG", optimize=False)
        return buffer.getvalue()

    def save_png(self, path: Path) -> bytes:
        data = self.to_png_bytes()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        return data

    @classmethod
    def from_png(cls, path: Path) -> RasterImage:
        with Image.open(path) as image:
            return cls(np.asarray(image.convert("RGB"), dtype=np.uint8))


def plot_rect(spec: ChartSpec) -> Rect:
    """Plotting area: the full canvas, or inset by the label margin."""
    last = spec.resolution - 1
    if spec.label_mode == "no_label":
        return Rect(0, 0, last, last)
    return Rect(LABEL_MARGIN, LABEL_MARGIN, last - LABEL_MARGIN, last - LABEL_MARGIN)


def _round_half_up(values: np.ndarray) -> np.ndarray:
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5).astype(np.int64)


def _validated(values: Sequence[float]) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64).reshape(-1)
    if array.size == 0:
        raise ChartSpecError("cannot render an empty series")
    if not np.all(np.isfinite(array)):
        raise ChartSpecError("series contains non-finite values")
    return array


def _value_to_row(values: np.ndarray, low: float, high: float, rect: Rect) -> np.ndarray:
    scaled = (values - low) / (high - low)
    return rect.y1 - _round_half_up(scaled * (rect.y1 - rect.y0))


def series_to_canvas(values: Sequence[float], rect: Rect) -> np.ndarray:
    """Map each timestep to an (x, y) pixel inside ``rect``.

    Per-instance min-max scaling puts the maximum on the top row and the
    minimum on the bottom row; a constant series sits on the middle row.

    Returns:
        int64 array of shape (T, 2) holding (x, y) pairs.
    """
    array = _validated(values)
    count = array.size
    if count == 1:
        xs = np.array([(rect.x0 + rect.x1) // 2], dtype=np.int64)
    else:
        xs = rect.x0 + _round_half_up(np.arange(count) * (rect.x1 - rect.x0) / (count - 1))

    low, high = float(array.min()), float(array.max())
    if high == low:
        ys = np.full(count, (rect.y0 + rect.y1) // 2, dtype=np.int64)
    else:
        ys = _value_to_row(array, low, high, rect)
    return np.stack([xs, ys], axis=1)


def baseline_row(values: Sequence[float], rect: Rect) -> int:
    """Row of data value 0, clamped into ``rect``."""
    array = _validated(values)
    low, high = float(array.min()), float(array.max())
    if low > 0:
        return rect.y1
    if high < 0:
        return rect.y0
    if high == low:
        return (rect.y0 + rect.y1) // 2
    return int(_value_to_row(np.array([0.0]), low, high, rect)[0])


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer pixels of the segment from (x0, y0) to (x1, y1), endpoints included."""
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            return points
        doubled = 2 * err
        if doubled >= dy:
            err += dy
            x += sx
        if doubled <= dx:
            err += dx
            y += sy


def _paint(mask: np.ndarray, rect: Rect, xs: np.ndarray, ys: np.ndarray) -> None:
    inside = (xs >= rect.x0) & (xs <= rect.x1) & (ys >= rect.y0) & (ys <= rect.y1)
    mask[ys[inside], xs[inside]] = True


def _draw_line(mask: np.ndarray, points: np.ndarray, rect: Rect, stroke_width: int) -> None:
    low = -((stroke_width - 1) // 2)
    offsets = np.arange(low, low + stroke_width)
    segments = zip(points[:-1], points[1:]) if len(points) > 1 else [(points[0], points[0])]
    for (xa, ya), (xb, yb) in segments:
        pixels = np.array(bresenham(int(xa), int(ya), int(xb), int(yb)), dtype=np.int64)
        x_major = abs(int(xb) - int(xa)) >= abs(int(yb) - int(ya))
        for offset in offsets:
            if x_major:
                _paint(mask, rect, pixels[:, 0], pixels[:, 1] + offset)
            else:
                _paint(mask, rect, pixels[:, 0] + offset, pixels[:, 1])


def _fill_columns(mask: np.ndarray, xs: np.ndarray, tops: np.ndarray, bottoms: np.ndarray) -> None:
    for x, top, bottom in zip(xs, tops, bottoms):
        mask[int(top) : int(bottom) + 1, int(x)] = True


def _data_layer(values: np.ndarray, spec: ChartSpec, rect: Rect) -> np.ndarray:
    size = spec.resolution
    mask = np.zeros((size, size), dtype=bool)
    points = series_to_canvas(values, rect)

    if spec.chart_type in ("line", "area"):
        _draw_line(mask, points, rect, spec.stroke_width)
    if spec.chart_type == "area":
        base = baseline_row(values, rect)
        region = mask[rect.y0 : rect.y1 + 1, rect.x0 : rect.x1 + 1]
        columns = np.flatnonzero(region.any(axis=0))
        for col in columns:
            rows = np.flatnonzero(region[:, col]) + rect.y0
            top, bottom = min(rows.min(), base), max(rows.max(), base)
            mask[top : bottom + 1, col + rect.x0] = True
    elif spec.chart_type == "bar":
        base = baseline_row(values, rect)
        bar_width = max(1, rect.width // len(points))
        left = points[:, 0] - (bar_width - 1) // 2
        for x_left, y in zip(left, points[:, 1]):
            lo, hi = max(int(x_left), rect.x0), min(int(x_left) + bar_width - 1, rect.x1)
            top, bottom = min(int(y), base), max(int(y), base)
            mask[top : bottom + 1, lo : hi + 1] = True
    elif spec.chart_type == "scatter":
        half = spec.marker_size // 2
        for x, y in points:
            lo_x, hi_x = max(x - half, rect.x0), min(x + half, rect.x1)
            lo_y, hi_y = max(y - half, rect.y0), min(y + half, rect.y1)
            mask[lo_y : hi_y + 1, lo_x : hi_x + 1] = True
    return mask


def _annotation_layer(spec: ChartSpec, rect: Rect) -> np.ndarray:
    size = spec.resolution
    mask = np.zeros((size, size), dtype=bool)
    if spec.label_mode == "no_label":
        return mask

    mask[rect.y0, rect.x0 : rect.x1 + 1] = True
    mask[rect.y1, rect.x0 : rect.x1 + 1] = True
    mask[rect.y0 : rect.y1 + 1, rect.x0] = True
    mask[rect.y0 : rect.y1 + 1, rect.x1] = True

    steps = np.arange(TICK_COUNT)
    tick_xs = rect.x0 + _round_half_up(steps * (rect.x1 - rect.x0) / (TICK_COUNT - 1))
    tick_ys = rect.y0 + _round_half_up(steps * (rect.y1 - rect.y0) / (TICK_COUNT - 1))
    for x in tick_xs:
        mask[rect.y1 + 1 : rect.y1 + 1 + TICK_LENGTH, x] = True
    for y in tick_ys:
        mask[y, rect.x0 - TICK_LENGTH : rect.x0] = True
    return mask


def render_layers(values: Sequence[float], spec: ChartSpec) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks of the data ink and of the frame/tick ink."""
    array = _validated(values)
    rect = plot_rect(spec)
    return _data_layer(array, spec, rect), _annotation_layer(spec, rect)


def render(values: Sequence[float], spec: ChartSpec) -> RasterImage:
    """Rasterize one series; a pure function of (values, spec)."""
    data, annotation = render_layers(values, spec)
    size = spec.resolution
    pixels = np.full((size, size, 3), 255, dtype=np.uint8)
    pixels[data] = spec.ink
    pixels[annotation] = BLACK
    return RasterImage(pixels)


def chart_specs(
    chart_types: Sequence[str],
    color_mode: str,
    label_mode: str,
    resolution: int,
) -> list[ChartSpec]:
    return [
        make_spec(
            chart_type=chart_type,
            color_mode=color_mode,
            label_mode=label_mode,
            resolution=resolution,
        )
        for chart_type in chart_types
    ]


# -------------------------------------------------------------------------
# Chart cache
# -------------------------------------------------------------------------


def _source_digest(values: np.ndarray, spec: ChartSpec) -> str:
    digest = hashlib.sha256(np.ascontiguousarray(values, dtype=np.float32).tobytes())
    digest.update(spec.model_dump_json().encode("utf-8"))
    return digest.hexdigest()


def chart_relpath(dataset: str, split: str, index: int, spec: ChartSpec) -> str:
    return f"{dataset}/{split}/{index}_{spec.slug}.png"


@dataclass
class ManifestRecord:
    path: str
    sha256: str
    spec: dict
    instance_index: int
    source: str


@dataclass
class Manifest:
    """Cache index; one line-delimited record per rendered file."""

    records: list[ManifestRecord] = field(default_factory=list)
    rendered: int = 0
    skipped: int = 0

    def by_path(self) -> dict[str, ManifestRecord]:
        return {record.path: record for record in self.records}

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [
            json.dumps(record.__dict__, sort_keys=True)
            for record in sorted(self.records, key=lambda r: r.path)
        ]
        tmp = path.with_suffix(".tmp")
        tmp.write_text("\n".join(lines) + ("\n" if lines else ""))
        tmp.replace(path)

    @classmethod
    def load(cls, path: Path) -> Manifest:
        if not path.exists():
            return cls()
        records = [
            ManifestRecord(**json.loads(line))
            for line in path.read_text().splitlines()
            if line.strip()
        ]
        return cls(records=records)


def _file_sha256(path: Path) -> str | None:
    if not path.exists():
        return None
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _render_task(
    out_dir: Path, relpath: str, values: np.ndarray, spec_json: str, index: int, source: str
) -> ManifestRecord:
    spec = ChartSpec.model_validate_json(spec_json)
    data = render(values, spec).save_png(out_dir / relpath)
    return ManifestRecord(
        path=relpath,
        sha256=hashlib.sha256(data).hexdigest(),
        spec=spec.model_dump(),
        instance_index=index,
        source=source,
    )


def render_cache(
    data,
    specs: Sequence[ChartSpec],
    out_dir: str | Path,
    workers: int = 1,
) -> Manifest:
    """Render every (instance, spec) pair of a split to PNG, skipping cached files.

    A file is reused when it exists, its bytes hash to the recorded sha256 and
    its source digest (values + spec) is unchanged; anything else is redrawn.
    The manifest is written once, after all renders finish, by the calling
    process only. Records of specs outside ``specs`` are carried over.

    Args:
        data: LabeledSeriesSet to render (its meta name and split name the folder).
        specs: Chart specifications.
        out_dir: Cache root.
        workers: Process count for rendering.

    Returns:
        Manifest of this split (records, rendered and skipped counts).
    """
    out_dir = Path(out_dir)
    dataset, split = data.meta.name, data.split
    manifest_path = out_dir / dataset / split / MANIFEST_NAME
    previous = Manifest.load(manifest_path).by_path()

    kept: list[ManifestRecord] = []
    pending = []
    for index, values in enumerate(data.values):
        for spec in specs:
            relpath = chart_relpath(dataset, split, index, spec)
            source = _source_digest(values, spec)
            record = previous.get(relpath)
            if (
                record is not None
                and record.source == source
                and _file_sha256(out_dir / relpath) == record.sha256
            ):
                kept.append(record)
            else:
                pending.append((out_dir, relpath, values, spec.model_dump_json(), index, source))

    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            fresh = list(pool.map(_render_task, *zip(*pending)))
    else:
        fresh = [_render_task(*task) for task in pending]

    merged = {**previous, **{record.path: record for record in kept + fresh}}
    manifest = Manifest(records=list(merged.values()), rendered=len(fresh), skipped=len(kept))
    manifest.write(manifest_path)
    logger.info(
        "Chart cache %s/%s: %d rendered, %d reused", dataset, split, manifest.rendered, manifest.skipped
    )
    return manifest


def load_chart_stack(out_dir: str | Path, data, spec: ChartSpec) -> np.ndarray:
    """Read the cached charts of one spec into a (N, R, R, 3) uint8 array."""
    out_dir = Path(out_dir)
    stack = np.empty((len(data), spec.resolution, spec.resolution, 3), dtype=np.uint8)
    for index in range(len(data)):
        path = out_dir / chart_relpath(data.meta.name, data.split, index, spec)
        if not path.exists():
            raise FileNotFoundError(f"Cached chart not found at: {path}")
        stack[index] = RasterImage.from_png(path).pixels
    return stack


def render_stack(data, spec: ChartSpec) -> np.ndarray:
    """Render a split in memory into a (N, R, R, 3) uint8 array."""
    stack = np.empty((len(data), spec.resolution, spec.resolution, 3), dtype=np.uint8)
    for index, values in enumerate(data.values):
        stack[index] = render(values, spec).pixels
    return stack
