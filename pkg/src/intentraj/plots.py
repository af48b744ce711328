"""Static figures for filter runs and evaluation reports.

All figures are rendered with matplotlib straight to SVG files. Each file
additionally embeds the plotted numbers as a JSON payload in an SVG
``<metadata>`` element, so downstream checks can parse the figure's data
back out instead of trusting pixels. Output is deterministic: a fixed hash
salt for element ids and no timestamps.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Rectangle

import numpy as np

from intentraj.core import IntentionMap

__all__ = [
    "plot_sample_fan",
    "plot_belief_timeline",
    "plot_report_summary",
    "embed_svg_data",
    "read_svg_data",
]

SVG_NS = "http://www.w3.org/2000/svg"
DATA_ELEMENT_ID = "intentraj-data"

plt.rcParams["svg.hashsalt"] = "intentraj"


def _savefig(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def embed_svg_data(path: str | Path, payload: dict) -> None:
    """Append a ``<metadata id="intentraj-data">`` JSON element to an SVG file."""
    ET.register_namespace("", SVG_NS)
    tree = ET.parse(path)
    meta = ET.SubElement(tree.getroot(), f"{{{SVG_NS}}}metadata", {"id": DATA_ELEMENT_ID})
    meta.text = json.dumps(payload, sort_keys=True)
    tree.write(path, encoding="unicode", xml_declaration=True)


def read_svg_data(path: str | Path) -> dict:
    """Parse back the payload written by :func:`embed_svg_data`."""
    root = ET.parse(path).getroot()
    for elem in root.iter(f"{{{SVG_NS}}}metadata"):
        if elem.get("id") == DATA_ELEMENT_ID:
            return json.loads(elem.text)
    raise ValueError(f"{path}: no embedded data element")


def _intention_color(rid: int, m: int):
    cmap = plt.get_cmap("tab20" if m > 10 else "tab10")
    return cmap(rid % cmap.N)


def _draw_map(ax, imap: IntentionMap) -> None:
    for region in imap.regions:
        ax.add_patch(
            Rectangle(
                (region.center.x - region.half_width, region.center.y - region.half_width),
                2 * region.half_width,
                2 * region.half_width,
                fill=False,
                edgecolor="black",
                linewidth=0.8,
            )
        )
        ax.annotate(str(region.id), (region.center.x, region.center.y),
                    ha="center", va="center", fontsize=7)


def plot_sample_fan(
    header: dict,
    iteration: dict,
    imap: IntentionMap,
    out_path: str | Path,
    truth: np.ndarray | None = None,
) -> None:
    """Observed trajectory plus every prediction sample, colored by intention."""
    frame = int(iteration["frame"])
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_map(ax, imap)
    m = len(imap)
    seen = set()
    for sample, rid in zip(iteration["samples"], iteration["intentions"]):
        pts = np.asarray(sample, dtype=float)
        label = f"G{rid}" if rid not in seen else None
        seen.add(rid)
        ax.plot(pts[:, 0], pts[:, 1], color=_intention_color(rid, m),
                alpha=0.25, linewidth=0.7, label=label)
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        ax.plot(truth[:frame, 0], truth[:frame, 1], color="black", linewidth=1.8,
                label="observed")
        ax.plot(truth[frame:, 0], truth[frame:, 1], color="black", linewidth=1.2,
                linestyle="--", label="future")
    ax.set_title(f"{header.get('ped_id', '?')} — prediction samples at frame {frame}")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=6)
    _savefig(fig, out_path)
    embed_svg_data(out_path, {
        "kind": "sample_fan",
        "ped_id": header.get("ped_id"),
        "frame": frame,
        "belief": iteration["belief"],
    })


def plot_belief_timeline(
    header: dict,
    iterations: list[dict],
    imap: IntentionMap,
    out_path: str | Path,
) -> None:
    """Stacked belief probabilities over the filtering process."""
    frames = [int(r["frame"]) for r in iterations]
    belief = np.array([r["belief"] for r in iterations], dtype=float)  # (n_iter, m)
    m = len(imap)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    colors = [_intention_color(j, m) for j in range(m)]
    ax.stackplot(frames, belief.T, colors=colors,
                 labels=[f"G{j}" for j in range(m)], linewidth=0)
    switch = header.get("switch_frame")
    if switch is not None:
        ax.axvline(switch, color="black", linestyle="--", linewidth=1.0)
        ax.annotate("intention switch", (switch, 1.02), fontsize=7, ha="center",
                    annotation_clip=False)
    ax.set_xlim(frames[0], frames[-1])
    ax.set_ylim(0, 1)
    ax.set_xlabel("frame")
    ax.set_ylabel("belief")
    ax.set_title(f"{header.get('ped_id', '?')} — belief over intentions")
    ax.legend(loc="center left", bbox_to_anchor=(1.01, 0.5), fontsize=6)
    fig.tight_layout()
    _savefig(fig, out_path)
    embed_svg_data(out_path, {
        "kind": "belief_timeline",
        "ped_id": header.get("ped_id"),
        "frames": frames,
        "belief": belief.tolist(),
        "switch_frame": switch,
    })


def plot_report_summary(reports: list[tuple[str, dict]], out_path: str | Path) -> None:
    """Offset errors and IEA across the evaluated (model, nti) configurations."""
    labels = [f"{model} nti={rep['nti']}" for model, rep in reports]
    x = np.arange(len(reports))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    width = 0.2
    for k, key in enumerate(("min_aoe", "mean_aoe", "min_foe", "mean_foe")):
        ax1.bar(x + (k - 1.5) * width, [rep[key] for _, rep in reports], width, label=key)
    ax1.set_xticks(x, labels, rotation=30, ha="right", fontsize=7)
    ax1.set_ylabel("offset error [m]")
    ax1.legend(fontsize=6)
    ieas = [rep["iea"] for _, rep in reports]
    ax2.bar(x, ieas, 0.5, color="tab:green")
    ax2.set_xticks(x, labels, rotation=30, ha="right", fontsize=7)
    ax2.set_ylim(0, 1.05)
    ax2.set_ylabel("IEA")
    fig.tight_layout()
    _savefig(fig, out_path)
    embed_svg_data(out_path, {
        "kind": "report_summary",
        "labels": labels,
        "reports": [rep for _, rep in reports],
    })
