"""Figure rendering for bench reports.

Writes PNG files next to the delimited report output: coverage per method,
interval width across checkpoints, and savings/exactness per policy.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .bench import Report  # noqa: E402


def _numeric_checkpoints(by_cp: dict) -> list[str]:
    return sorted((cp for cp in by_cp if cp.isdigit()), key=int)


def plot_coverage(report: Report, path: Path, theta: str = "0.05") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    methods = sorted(report.estimators)
    xs, heights, labels = [], [], []
    for i, method in enumerate(methods):
        cell = report.estimators[method].get("pooled", {}).get(theta)
        if not cell or "coverage" not in cell:
            continue
        xs.append(i)
        heights.append(cell["coverage"])
        labels.append(method)
    ax.bar(range(len(heights)), heights, color="#4878d0")
    nominal = 1 - float(theta)
    ax.axhline(nominal, color="crimson", linestyle="--", linewidth=1,
               label=f"nominal {nominal:.2f}")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("coverage")
    ax.set_title(f"Interval coverage at confidence {nominal:.0%}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_width(report: Report, path: Path, theta: str = "0.05") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    drew = False
    for method, by_cp in sorted(report.estimators.items()):
        cps = _numeric_checkpoints(by_cp)
        pts = [(int(cp), by_cp[cp][theta]["mean_width"]) for cp in cps
               if theta in by_cp[cp] and by_cp[cp][theta].get("count")]
        pts = [(t, w) for t, w in pts if t > 0]
        if len(pts) < 2:
            continue
        ax.plot(*zip(*pts), marker="o", label=method)
        drew = True
    if drew:
        ax.set_xscale("log", base=2)
        ax.legend()
    ax.set_xlabel("leaves visited")
    ax.set_ylabel("mean interval width")
    ax.set_title("Prediction interval width over search progress")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_policies(report: Report, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    names = sorted(report.policies)
    exact = [report.policies[n].get("exact_ratio", 0.0) for n in names]
    savings = [report.policies[n].get("savings_leaves", 0.0) for n in names]
    x = range(len(names))
    ax.bar([i - 0.2 for i in x], exact, width=0.4, label="exact-answer ratio",
           color="#4878d0")
    ax.bar([i + 0.2 for i in x], savings, width=0.4, label="leaf savings",
           color="#ee854a")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=20)
    ax.set_ylim(0, 1.05)
    ax.set_title("Stopping policies: exactness vs savings")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report_figures(report: Report, outdir: Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    if report.estimators:
        p = outdir / "coverage.png"
        plot_coverage(report, p)
        written.append(p)
        p = outdir / "interval_width.png"
        plot_width(report, p)
        written.append(p)
    if report.policies:
        p = outdir / "policies.png"
        plot_policies(report, p)
        written.append(p)
    return written
