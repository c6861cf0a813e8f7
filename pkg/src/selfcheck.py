"""Built-in correctness suites: tensor-engine gradients, rasterizer oracles and statistics oracles."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np
import pandas as pd
from PIL import Image
from scipy.stats import rankdata

from src.chart_render import RasterImage, make_spec, plot_rect, render, render_layers, series_to_canvas
from src.config import CHART_TYPES, LABEL_MODES, RESOLUTION_PRESETS
from src.encoders import DeepCNN, OSCNNEncoder, ShallowCNN, TransformerEncoder
from src.fusion import ClassifierHead, WeightedFusion
from src.nn import functional as F
from src.nn.gradcheck import grad_check
from src.nn.modules import BatchNorm, Conv1d, Conv2d, LayerNorm, Linear, Module, MultiHeadSelfAttention
from src.nn.tensor import Tensor
from src.stats import avg_rank_table, cliffs_delta, mean_ci95, wilcoxon_signed_rank

logger = logging.getLogger(__name__)

LAYER_TOLERANCE = 1e-3
STACK_TOLERANCE = 5e-3


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str = ""


def _run(suite: str, name: str, check: Callable[[], tuple[bool, str]]) -> CheckResult:
    try:
        passed, detail = check()
    except Exception as exc:
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    if not passed:
        logger.warning("Self-check %s/%s failed: %s", suite, name, detail)
    return CheckResult(suite, name, passed, detail)


# ---- gradients -------------------------------------------------------------------------


def _module_check(module: Module, shape: tuple[int, ...], tolerance: float, seed: int, after=None):
    def check() -> tuple[bool, str]:
        rng = np.random.default_rng(seed)
        module.to_dtype(np.float64).train()
        x = rng.standard_normal(shape)

        def fn(inp: Tensor) -> Tensor:
            out = module(inp)
            return after(out) if after is not None else out

        error = grad_check(fn, x, wrt=module.parameters(), max_coords=16, seed=seed)
        return error < tolerance, f"max rel err {error:.2e}"

    return check


def _cross_entropy_check(seed: int):
    def check() -> tuple[bool, str]:
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 5, size=4)
        error = grad_check(lambda t: F.cross_entropy(t, labels), rng.standard_normal((4, 5)), seed=seed)
        return error < LAYER_TOLERANCE, f"max rel err {error:.2e}"

    return check


def _fusion_check(seed: int):
    def check() -> tuple[bool, str]:
        rng = np.random.default_rng(seed)
        fusion = WeightedFusion([6, 6], 4, rng)
        head = ClassifierHead(4, 3, rng, hidden=5, dropout=0.0)
        for module in (fusion, head):
            module.to_dtype(np.float64)
        for weight in fusion.attention:
            weight.data = rng.standard_normal(weight.shape)
        other = Tensor(rng.standard_normal((3, 6)), dtype=np.float64)

        def fn(inp: Tensor) -> Tensor:
            return head(fusion([inp, other]))

        params = fusion.parameters() + head.parameters()
        error = grad_check(fn, rng.standard_normal((3, 6)), wrt=params, max_coords=16, seed=seed)
        return error < STACK_TOLERANCE, f"max rel err {error:.2e}"

    return check


def gradient_suite(seeds: tuple[int, ...] = (0, 1, 2)) -> list[CheckResult]:
    results = []
    for seed in seeds:
        rng = np.random.default_rng(100 + seed)
        layers = {
            "linear": (Linear(5, 4, rng), (3, 5), None),
            "conv2d": (Conv2d(2, 3, 3, rng, pad=1), (2, 2, 5, 5), None),
            "conv1d": (Conv1d(2, 3, 4, rng), (2, 2, 7), None),
            "batch_norm": (BatchNorm(3), (4, 3, 2, 2), None),
            "layer_norm": (LayerNorm(6), (2, 3, 6), None),
            "attention": (MultiHeadSelfAttention(4, 2, rng), (2, 3, 4), None),
            "relu_maxpool": (Conv2d(1, 2, 3, rng, pad=1), (2, 1, 4, 4), lambda t: F.maxpool2(F.relu(t))),
        }
        for name, (module, shape, after) in layers.items():
            check = _module_check(module, shape, LAYER_TOLERANCE, seed, after)
            results.append(_run("gradient", f"{name}[seed={seed}]", check))
        results.append(_run("gradient", f"cross_entropy[seed={seed}]", _cross_entropy_check(seed)))

        stacks = {
            "shallow_cnn": (ShallowCNN(16, rng, dropout=0.0), (2, 3, 16, 16)),
            "deep_cnn": (DeepCNN(32, rng, dropout=0.0), (2, 3, 32, 32)),
            "transformer": (TransformerEncoder(rng, output_dim=4, d_model=4, heads=2, layers=1), (2, 6)),
            "oscnn": (OSCNNEncoder(6, rng, output_dim=4, channels=2, max_kernel=5), (3, 6)),
        }
        for name, (module, shape) in stacks.items():
            check = _module_check(module, shape, STACK_TOLERANCE, seed)
            results.append(_run("gradient", f"{name}[seed={seed}]", check))
        results.append(_run("gradient", f"fusion_head[seed={seed}]", _fusion_check(seed)))
    return results


# ---- rasterizer -------------------------------------------------------------------------


def _every_step_inked(chart_type: str, resolution: int) -> Callable[[], tuple[bool, str]]:
    def check() -> tuple[bool, str]:
        values = np.sin(np.linspace(0.0, 6.0, 40))
        spec = make_spec(chart_type=chart_type, resolution=resolution, label_mode="with_label")
        data, _ = render_layers(values, spec)
        rect = plot_rect(spec)
        points = series_to_canvas(values, rect)
        columns = {int(x) for x, _ in points}
        empty = [x for x in columns if not data[rect.y0 : rect.y1 + 1, x].any()]
        return not empty, f"{len(columns)} columns, {len(empty)} without ink"

    return check


def _deterministic(resolution: int) -> Callable[[], tuple[bool, str]]:
    def check() -> tuple[bool, str]:
        values = np.random.default_rng(0).standard_normal(50)
        hashes = {
            render(values, make_spec(chart_type=t, color_mode=c, label_mode=l, resolution=resolution)).pixel_sha256
            for t, c, l in product(("line", "bar"), ("mono", "color"), ("no_label",))
            for _ in range(2)
        }
        return len(hashes) == 4, f"{len(hashes)} distinct hashes for 4 settings rendered twice"

    return check


def _constant_series(resolution: int) -> Callable[[], tuple[bool, str]]:
    def check() -> tuple[bool, str]:
        found = []
        for label_mode in LABEL_MODES:
            spec = make_spec(chart_type="line", label_mode=label_mode, resolution=resolution)
            rect = plot_rect(spec)
            centre = (rect.y0 + rect.y1) // 2
            rows = set(series_to_canvas(np.full(20, 3.5), rect)[:, 1].tolist())
            data, _ = render_layers(np.full(20, 3.5), spec)
            inked = set(np.flatnonzero(data.any(axis=1)).tolist())
            passed = rows == {centre} and inked == {centre}
            found.append((passed, f"{label_mode}: rows {sorted(inked)}, centre {centre}"))
        return all(ok for ok, _ in found), "; ".join(detail for _, detail in found)

    return check


def _label_frame(resolution: int) -> Callable[[], tuple[bool, str]]:
    def check() -> tuple[bool, str]:
        values = np.cos(np.linspace(0.0, 3.0, 30))
        spec = make_spec(chart_type="scatter", label_mode="with_label", resolution=resolution)
        _, annotation = render_layers(values, spec)
        rect = plot_rect(spec)
        edges = (
            annotation[rect.y0, rect.x0 : rect.x1 + 1].all()
            and annotation[rect.y1, rect.x0 : rect.x1 + 1].all()
            and annotation[rect.y0 : rect.y1 + 1, rect.x0].all()
            and annotation[rect.y0 : rect.y1 + 1, rect.x1].all()
        )
        _, unlabelled = render_layers(values, make_spec(chart_type="scatter", resolution=resolution))
        passed = bool(edges) and not unlabelled.any()
        return passed, f"frame closed: {bool(edges)}, unlabelled annotation {int(unlabelled.sum())} px"

    return check


def _png_round_trip() -> tuple[bool, str]:
    image = render(np.arange(12.0), make_spec(chart_type="area", color_mode="color", resolution=32))
    decoded = np.asarray(Image.open(io.BytesIO(image.to_png_bytes())).convert("RGB"))
    same = RasterImage(decoded).pixel_sha256 == image.pixel_sha256
    return same, "decoded pixels identical" if same else "decoded pixels differ"


def raster_suite() -> list[CheckResult]:
    results = []
    for resolution in RESOLUTION_PRESETS:
        results.extend(
            _run("raster", f"every_step_inked[{t}@{resolution}]", _every_step_inked(t, resolution))
            for t in CHART_TYPES
        )
        results.append(_run("raster", f"deterministic[{resolution}]", _deterministic(resolution)))
        results.append(_run("raster", f"constant_series_centered[{resolution}]", _constant_series(resolution)))
        results.append(_run("raster", f"label_frame[{resolution}]", _label_frame(resolution)))
    results.append(_run("raster", "png_round_trip", _png_round_trip))
    return results


# ---- statistics -------------------------------------------------------------------------


def _enumerated_p(diffs: np.ndarray) -> float:
    ranks = rankdata(np.abs(diffs))
    observed = ranks[diffs > 0].sum()
    centre = ranks.sum() / 2.0
    signs = np.array(list(product((0, 1), repeat=len(diffs))))
    sums = signs @ ranks
    return float(np.mean(np.abs(sums - centre) >= abs(observed - centre) - 1e-9))


def _wilcoxon_exact() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst = 0.0
    fixtures = [np.array([1.0, 2.0, 3.0, -1.0])] + [rng.normal(0.2, 1.0, n).round(1) for n in range(3, 11)]
    for diffs in fixtures:
        diffs = diffs[diffs != 0]
        got = wilcoxon_signed_rank(diffs, np.zeros_like(diffs)).p_value
        worst = max(worst, abs(got - _enumerated_p(diffs)))
    return worst < 1e-12, f"max |p - enumeration| {worst:.1e} over {len(fixtures)} fixtures"


def _wilcoxon_degenerate() -> tuple[bool, str]:
    result = wilcoxon_signed_rank([0.5, 0.7], [0.5, 0.7])
    return result.p_value == 1.0 and result.degenerate, f"p={result.p_value}, method={result.method}"


def _cliffs_brute_force() -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        a = rng.integers(0, 6, rng.integers(1, 9)).astype(float)
        b = rng.integers(0, 6, rng.integers(1, 9)).astype(float)
        wins = sum(1 for x in a for y in b if x > y)
        losses = sum(1 for x in a for y in b if x < y)
        worst = max(worst, abs(cliffs_delta(a, b)[0] - (wins - losses) / (len(a) * len(b))))
    return worst < 1e-12, f"max deviation {worst:.1e}"


def _ci_oracle() -> tuple[bool, str]:
    mean, half = mean_ci95([0.0, 1.0])
    return math.isclose(mean, 0.5) and math.isclose(half, 6.353, abs_tol=1e-3), f"mean {mean}, half-width {half:.4f}"


def _rank_ties() -> tuple[bool, str]:
    acc = pd.DataFrame({"a": [0.9, 0.7], "b": [0.8, 0.7]}, index=["d1", "d2"])
    table = avg_rank_table(acc).table
    ok = table.loc["a", "avg_rank"] == 1.25 and table.loc["a", "wins"] == 2 and table.loc["b", "wins"] == 1
    return bool(ok), f"avg ranks {table['avg_rank'].to_dict()}"


def stats_suite() -> list[CheckResult]:
    return [
        _run("stats", "wilcoxon_exact_enumeration", _wilcoxon_exact),
        _run("stats", "wilcoxon_degenerate", _wilcoxon_degenerate),
        _run("stats", "cliffs_delta_brute_force", _cliffs_brute_force),
        _run("stats", "mean_ci95_t_table", _ci_oracle),
        _run("stats", "avg_rank_ties", _rank_ties),
    ]


SUITES: dict[str, Callable[[], list[CheckResult]]] = {
    "gradient": gradient_suite,
    "raster": raster_suite,
    "stats": stats_suite,
}


def run_selfcheck(suites: list[str] | None = None) -> list[CheckResult]:
    """Run the named suites (all by default) and return every check result."""
    names = suites or list(SUITES)
    unknown = sorted(set(names) - set(SUITES))
    if unknown:
        raise ValueError(f"unknown self-check suites: {unknown}")
    results = []
    for name in names:
        logger.info("Running %s checks", name)
        results.extend(SUITES[name]())
    return results
