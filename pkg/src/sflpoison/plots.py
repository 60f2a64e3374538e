"""Matplotlib figures rendered next to the report tables."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def accuracy_curves(labeled_records, path: str) -> str:
    """Test accuracy per epoch, one line per labeled run."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, record in labeled_records:
        accs = [r.accuracy for r in record.reports]
        ax.plot(range(len(accs)), accs, marker="o", markersize=3, label=label)
    ax.set_xlabel("global epoch")
    ax.set_ylabel("test accuracy (%)")
    ax.grid(True, alpha=0.3)
    if len(labeled_records) <= 14:
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def drop_vs_malicious(grid, path: str) -> str:
    """Accuracy drop vs malicious percentage, one line per (version, attack)."""
    series: dict[tuple[str, str], dict[int, float]] = {}
    for cell in grid.cells:
        drop = cell.record.final_accuracy_drop
        if drop is None or cell.attack_kind == "none":
            continue  # every attack series starts from (0, 0) anyway
        series.setdefault((cell.version, cell.attack_kind), {0: 0.0})[cell.malicious_pct] = drop
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for (version, attack), pts in sorted(series.items()):
        xs = sorted(pts)
        ax.plot(xs, [pts[x] for x in xs], marker="o", label=f"{version} {attack}")
    ax.set_xlabel("malicious clients (%)")
    ax.set_ylabel("accuracy drop (%)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def drop_vs_cut(grid, path: str) -> str:
    """Accuracy drop per split version, grouped by attack, at the largest percentage."""
    pcts = [c.malicious_pct for c in grid.cells if c.attack_kind != "none"]
    top = max(pcts) if pcts else 0
    versions = sorted({c.version for c in grid.cells})
    attacks = sorted({c.attack_kind for c in grid.cells if c.attack_kind != "none"})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    width = 0.8 / max(len(attacks), 1)
    for i, attack in enumerate(attacks):
        drops = []
        for version in versions:
            match = [c.record.final_accuracy_drop for c in grid.cells
                     if c.version == version and c.attack_kind == attack
                     and c.malicious_pct == top]
            drops.append(match[0] if match and match[0] is not None else 0.0)
        offs = [v + i * width for v in range(len(versions))]
        ax.bar(offs, drops, width=width, label=attack)
    ax.set_xticks([v + width * (len(attacks) - 1) / 2 for v in range(len(versions))])
    ax.set_xticklabels(versions)
    ax.set_ylabel(f"accuracy drop (%) at {top}% malicious")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
