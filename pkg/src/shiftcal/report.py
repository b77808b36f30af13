"""Figure rendering for sweep reports.

Renders static matplotlib figures next to the delimited output so a sweep
directory is self-describing: a histogram of per-environment coverage at
one error level, and mean +/- std of the metric across the level grid.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_METHOD_ORDER = ("unweighted", "max", "oracle", "a1", "a2", "a3",
                 "risk_uniform", "risk_weighted")


def _env_means(results, method, alpha):
    envs = {}
    for r in results:
        if r.method == method and np.isclose(r.alpha, alpha):
            envs.setdefault(r.env_id, []).append(r.metric_value)
    return np.array([np.mean(v) for _, v in sorted(envs.items())])


def _methods_in(results):
    present = {r.method for r in results}
    return [m for m in _METHOD_ORDER if m in present] + sorted(
        present - set(_METHOD_ORDER)
    )


def coverage_histogram(results, alpha, path):
    """Per-environment coverage distribution, one histogram overlay per method."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    bins = np.linspace(0.0, 1.0, 101)
    for method in _methods_in(results):
        vals = _env_means(results, method, alpha)
        if vals.size:
            ax.hist(vals, bins=bins, alpha=0.55,
                    label=f"{method} ({vals.mean():.3f} ± {vals.std():.3f})")
    ax.axvline(1.0 - alpha, color="black", linestyle="--", linewidth=1,
               label=f"target {1 - alpha:.2f}")
    lo = min((_env_means(results, m, alpha).min() for m in _methods_in(results)
              if _env_means(results, m, alpha).size), default=0.5)
    ax.set_xlim(max(0.0, lo - 0.05), 1.0)
    ax.set_xlabel("per-environment metric")
    ax.set_ylabel("environments")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def metric_vs_level(results, path):
    """Mean +/- std across environments as a function of 1 - alpha."""
    alphas = sorted({round(r.alpha, 12) for r in results})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method in _methods_in(results):
        xs, means, stds = [], [], []
        for a in alphas:
            vals = _env_means(results, method, a)
            if vals.size:
                xs.append(1.0 - a)
                means.append(vals.mean())
                stds.append(vals.std())
        if xs:
            ax.errorbar(xs, means, yerr=stds, marker="o", capsize=3,
                        markersize=4, label=method)
    lim = [min(1.0 - a for a in alphas) - 0.05, max(1.0 - a for a in alphas) + 0.05]
    ax.plot(lim, lim, color="black", linestyle="--", linewidth=1)
    ax.set_xlabel("target level (1 - alpha)")
    ax.set_ylabel("mean metric across environments")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_figures(results, out_dir):
    """Write both figures into ``out_dir``; returns the created paths."""
    alphas = sorted({round(r.alpha, 12) for r in results})
    hist_path = out_dir / f"coverage_hist_alpha{alphas[0]:g}.png"
    coverage_histogram(results, alphas[0], hist_path)
    curve_path = out_dir / "metric_vs_level.png"
    metric_vs_level(results, curve_path)
    return [hist_path, curve_path]
