"""Deterministic chart rendering of sample windows for multimodal input.

Each variable gets its own stacked panel on a shared time axis so that
wildly different units never need normalization. Rendering is a pure
function of (sample, style): identical samples produce byte-identical PNGs.
"""

from __future__ import annotations

import base64
import io
import struct
from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .data import Sample  # noqa: E402
from .errors import RenderError  # noqa: E402

# Fixed per-variable palette, cycled when a window has more variables.
PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
    "#bcbd22",
)

MAX_TIME_TICKS = 6


@dataclass(frozen=True)
class ChartStyle:
    """Rendering knobs; defaults target legibility at model-input size."""

    width_px: int = 1200
    panel_height_px: int = 150
    dpi: int = 100
    line_width: float = 2.0
    grid_alpha: float = 0.3
    y_padding: float = 0.05


@dataclass(frozen=True)
class ChartImage:
    png_bytes: bytes
    width: int
    height: int
    sample_id: str

    def __post_init__(self):
        if not self.png_bytes.startswith(b"\x89PNG\r\n\x1a\n"):
            raise RenderError(f"chart for {self.sample_id}: not a PNG byte stream")


def _png_dimensions(png_bytes: bytes) -> tuple[int, int]:
    # IHDR is always the first chunk: width/height live at bytes 16..24.
    width, height = struct.unpack(">II", png_bytes[16:24])
    return int(width), int(height)


def _tick_positions(n: int) -> list[int]:
    if n <= MAX_TIME_TICKS:
        return list(range(n))
    step = (n - 1) / (MAX_TIME_TICKS - 1)
    return sorted({round(i * step) for i in range(MAX_TIME_TICKS)})


def render_chart(sample: Sample, style: ChartStyle | None = None) -> ChartImage:
    """Render one stacked panel per variable; raises on non-finite cells."""
    style = style or ChartStyle()
    window = sample.window
    if window.size == 0:
        raise RenderError(f"sample {sample.id}: empty window")
    bad = ~np.isfinite(window)
    if bad.any():
        row, col = map(int, np.argwhere(bad)[0])
        raise RenderError(
            f"sample {sample.id}: non-finite value at step {row}, "
            f"variable {sample.variable_names[col]!r}"
        )

    n_steps, n_vars = window.shape
    fig_w = style.width_px / style.dpi
    fig_h = style.panel_height_px * n_vars / style.dpi
    fig, axes = plt.subplots(
        n_vars, 1, sharex=True, figsize=(fig_w, fig_h), dpi=style.dpi, squeeze=False
    )
    x = np.arange(n_steps)
    ticks = _tick_positions(n_steps)
    tick_labels = [
        np.datetime_as_string(sample.timestamps[i].astype("datetime64[m]")) for i in ticks
    ]
    try:
        for j in range(n_vars):
            ax = axes[j][0]
            color = PALETTE[j % len(PALETTE)]
            series = window[:, j]
            if n_steps == 1:
                ax.plot(x, series, marker="o", color=color, linewidth=style.line_width)
            else:
                ax.plot(x, series, color=color, linewidth=style.line_width)
            ax.set_title(sample.variable_names[j], fontsize=9, loc="left")
            ax.grid(True, alpha=style.grid_alpha, linewidth=0.5)
            ax.tick_params(labelsize=7)
            lo, hi = float(series.min()), float(series.max())
            pad = (hi - lo) * style.y_padding or max(abs(hi), 1.0) * style.y_padding
            ax.set_ylim(lo - pad, hi + pad)
        axes[-1][0].set_xticks(ticks)
        axes[-1][0].set_xticklabels(tick_labels, rotation=0, fontsize=7)
        axes[-1][0].set_xlabel("time", fontsize=8)
        fig.tight_layout()
        buf = io.BytesIO()
        # Strip the Software chunk so bytes do not vary across library builds.
        fig.savefig(buf, format="png", metadata={"Software": None})
    finally:
        plt.close(fig)

    png = buf.getvalue()
    width, height = _png_dimensions(png)
    return ChartImage(png_bytes=png, width=width, height=height, sample_id=sample.id)


def encode_for_transport(image: ChartImage) -> str:
    """Base64 payload for a data-URL image attachment."""
    if not image.png_bytes:
        raise RenderError(f"chart for {image.sample_id}: empty byte payload")
    return base64.b64encode(image.png_bytes).decode("ascii")


def data_url(image: ChartImage) -> str:
    return png_data_url(image.png_bytes)


def png_data_url(png_bytes: bytes) -> str:
    if not png_bytes:
        raise RenderError("empty byte payload")
    return f"data:image/png;base64,{base64.b64encode(png_bytes).decode('ascii')}"


def save_chart(image: ChartImage, directory) -> str:
    """Write `<sample_id>.png` under the directory; returns the path."""
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{image.sample_id}.png"
    path.write_bytes(image.png_bytes)
    return str(path)
