"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .tensorio import atomic_write  # noqa: E402

RC = {
    "font.size": 9,
    "legend.fontsize": 7,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}


def _save(fig, path) -> Path:
    buf = io.BytesIO()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())
    return Path(path)


def plot_colsum_distributions(report: dict, path, adc_bits: int = 7, title: str = "") -> Path:
    """Step plot of column-sum bit widths, one line per phase or ladder rung."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        for name, rec in report.items():
            total = rec["count"] or 1
            bws = sorted(rec["histogram"])
            fr = [rec["histogram"][b] / total for b in bws]
            label = f"{name} (sat {100 * rec['saturation_rate']:.2f}%)"
            ax.step(bws, fr, where="mid", label=label)
        ax.axvline(adc_bits + 0.5, color="k", lw=0.8, ls="--")
        ax.set_xlabel("column sum resolution (signed bits)")
        ax.set_ylabel("fraction of column sums")
        ax.set_yscale("log")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_ablation(rows: list[dict], ladder: dict, path) -> Path:
    with plt.rc_context(RC):
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(9, 3.4))
        names = list(ladder)
        rates = [100 * ladder[n]["saturation_rate"] for n in names]
        a0.bar(range(len(names)), rates, color="tab:blue")
        a0.set_xticks(range(len(names)), [n.replace("_", "\n") for n in names], fontsize=6)
        a0.set_ylabel("raw column sums outside 7b range (%)")
        a0.set_yscale("symlog", linthresh=0.1)
        setups = [r["setup"] for r in rows]
        cpm = [float(r["converts_per_mac"]) for r in rows]
        a1.bar(range(len(setups)), cpm, color="tab:orange")
        a1.set_xticks(range(len(setups)), [s.replace("_", "\n") for s in setups], fontsize=6)
        a1.set_ylabel("ADC converts / MAC")
        for i, v in enumerate(cpm):
            a1.annotate(f"{v:.3g}", (i, v), ha="center", va="bottom", fontsize=7)
        fig.tight_layout()
        return _save(fig, path)


def plot_noise_sweep(points, path) -> Path:
    with plt.rc_context(RC):
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(8, 3.2))
        for name in dict.fromkeys(p.layer for p in points):
            pts = [p for p in points if p.layer == name]
            xs = [100 * p.noise_level for p in pts]
            a0.plot(xs, [p.error for p in pts], marker="o", label=name)
            a1.plot(xs, [len(p.slicing) for p in pts], marker="s", label=name)
        a0.set_xlabel("noise level E (%)")
        a0.set_ylabel("mean |error| on non-zero outputs")
        a1.set_xlabel("noise level E (%)")
        a1.set_ylabel("weight slices")
        a1.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
