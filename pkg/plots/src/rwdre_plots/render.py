"""Publication-style figures from rwdre CSV outputs.

Figures are pure functions of the CSV contents: render() returns the
plotted series alongside writing the file, so callers can verify exactly
what went on the axes. No simulation happens here.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

KINDS = ("phCurves", "decouplingDecay", "llnConvergence", "ballisticity", "trajectoryRaster")

EXPECTED_COLUMNS = {
    "phCurves": ["H", "v", "p_hat", "ci_low", "ci_high", "n", "seed"],
    "decouplingDecay": ["d_h", "d_v", "s", "gap_hat", "stderr", "bound"],
    "llnConvergence": ["t", "mean_speed", "sd", "dev_prob"],
    "ballisticity": ["t", "p_hat", "bound"],
    "trajectoryRaster": ["time", "site", "old_occ", "new_occ", "class"],
}


class SchemaError(ValueError):
    """The CSV does not match the figure kind's expected schema."""


@dataclass
class FigureSpec:
    input_csv: str
    kind: str
    output: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}; expected one of {', '.join(KINDS)}")


@dataclass
class RenderResult:
    output: Path
    series: dict  # label -> dict of plotted arrays


def read_table(path, kind) -> dict:
    """Load the CSV and check the kind's schema; returns column arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: no data") from None
        rows = list(reader)
    expected = EXPECTED_COLUMNS[kind]
    for col in expected:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r} for kind {kind}")
    if not rows:
        raise SchemaError(f"{path}: no data")
    idx = {c: header.index(c) for c in header}
    table = {}
    for col in header:
        raw = [r[idx[col]] for r in rows]
        if col == "class":
            table[col] = np.array([v if v else "" for v in raw], dtype=object)
        else:
            table[col] = np.array([float(v) if v != "" else np.nan for v in raw])
    return table


def _render_ph_curves(table, ax, options):
    series = {}
    for h in sorted(set(table["H"])):
        mask = table["H"] == h
        v = table["v"][mask]
        order = np.argsort(v)
        v, p = v[order], table["p_hat"][mask][order]
        lo, hi = table["ci_low"][mask][order], table["ci_high"][mask][order]
        label = f"H = {h:g}"
        ax.plot(v, p, marker="o", label=label)
        ax.fill_between(v, lo, hi, alpha=0.25)
        series[label] = {"v": v, "p_hat": p, "ci_low": lo, "ci_high": hi}
    ax.set_xlabel("speed v (sites/s)")
    ax.set_ylabel(r"$\hat p_H(v)$")
    ax.set_title("box-crossing probability")
    ax.legend()
    return series


def _render_decoupling(table, ax, options):
    order = np.argsort(table["d_h"])
    d_h = table["d_h"][order]
    gap_plus = np.maximum(table["gap_hat"][order], 1e-6)
    bound = table["bound"][order]
    ax.semilogy(d_h, gap_plus, marker="o", label="gap (positive part)")
    ax.errorbar(d_h, gap_plus, yerr=np.minimum(3 * table["stderr"][order], gap_plus * 0.999), fmt="none", alpha=0.5)
    ax.semilogy(d_h, bound, marker="s", linestyle="--", label="configured bound")
    ax.set_xlabel("horizontal distance d_H (sites)")
    ax.set_ylabel("correlation gap")
    ax.set_title("lateral decoupling decay")
    ax.legend()
    return {"gap": {"d_h": d_h, "gap_plus": gap_plus, "bound": bound}}


def _render_lln(table, ax, options):
    order = np.argsort(table["t"])
    t = table["t"][order]
    mean = table["mean_speed"][order]
    sd = table["sd"][order]
    ax.plot(t, mean, marker="o", label="mean X_t / t")
    ax.fill_between(t, mean - sd, mean + sd, alpha=0.25, label="± sd")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("average speed")
    ax.set_title("law of large numbers convergence")
    ax.legend()
    return {"lln": {"t": t, "mean_speed": mean, "sd": sd}}


def _render_ballisticity(table, ax, options):
    order = np.argsort(table["t"])
    t = table["t"][order]
    p = np.maximum(table["p_hat"][order], 1e-6)
    ax.semilogy(t, p, marker="o", label=r"$\hat P(X_t \leq v_\star t)$")
    bound = table["bound"][order]
    if not np.all(np.isnan(bound)):
        ax.semilogy(t, bound, linestyle="--", label="configured bound")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("probability")
    ax.set_title("ballisticity lower-deviation decay")
    ax.legend()
    return {"ballisticity": {"t": t, "p_hat": p, "bound": bound}}


def _render_raster(table, ax, options):
    times = table["time"]
    sites = table["site"].astype(int)
    t_max = float(times.max()) * 1.0001
    x_lo, x_hi = int(sites.min()), int(sites.max())
    nbins = int(options.get("time_bins", 200))
    edges = np.linspace(0.0, t_max, nbins + 1)
    width = x_hi - x_lo + 1
    # reconstruct occupancy from the change log; sites without any event
    # carry unknown initial state and render as their first-event old value
    occ = np.zeros(width)
    seen = np.zeros(width, dtype=bool)
    for s, old in zip(sites, table["old_occ"]):
        i = s - x_lo
        if not seen[i]:
            occ[i] = old
            seen[i] = True
    grid = np.empty((width, nbins))
    ev = 0
    order = np.argsort(times, kind="stable")
    times_o, sites_o, new_o = times[order], sites[order], table["new_occ"][order]
    for b in range(nbins):
        while ev < len(times_o) and times_o[ev] <= edges[b]:
            occ[sites_o[ev] - x_lo] = new_o[ev]
            ev += 1
        grid[:, b] = occ
    ax.imshow(
        grid,
        origin="lower",
        aspect="auto",
        extent=(0.0, t_max, x_lo - 0.5, x_hi + 0.5),
        cmap=options.get("cmap", "Greys"),
        interpolation="nearest",
    )
    series = {"raster": {"grid": grid, "edges": edges}}
    walk_csv = options.get("walk_csv")
    if walk_csv:
        wt, wx = [], []
        with open(walk_csv, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["t", "x"]:
                raise SchemaError(f"{walk_csv}: missing column 't'/'x' for walk overlay")
            for row in reader:
                wt.append(float(row[0]))
                wx.append(float(row[1]))
        ax.step(wt, wx, where="post", color="crimson", linewidth=1.5, label="walk")
        ax.legend()
        series["walk"] = {"t": np.array(wt), "x": np.array(wx)}
    ax.set_xlabel("t (s)")
    ax.set_ylabel("site")
    ax.set_title("environment raster")
    return series


RENDERERS = {
    "phCurves": _render_ph_curves,
    "decouplingDecay": _render_decoupling,
    "llnConvergence": _render_lln,
    "ballisticity": _render_ballisticity,
    "trajectoryRaster": _render_raster,
}


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure; returns the plotted series for verification."""
    table = read_table(spec.input_csv, spec.kind)
    fig, ax = plt.subplots(figsize=(7.0, 4.5), layout="constrained")
    try:
        series = RENDERERS[spec.kind](table, ax, spec.options)
        out = Path(spec.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out)
    finally:
        plt.close(fig)
    return RenderResult(Path(spec.output), series)
