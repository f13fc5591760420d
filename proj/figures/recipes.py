"""Figure recipes over the CSV/JSON files written by the dipoleforge CLI.

Every recipe reads a run root (the directory holding one subdirectory per
experiment, e.g. ``runs/``) and writes ``<figure>.svg`` and ``<figure>.png``.
Nothing is recomputed here.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

TWO_PI = 2.0 * np.pi
E_CHARGE = 1.602176634e-19
REF_STYLE = dict(color="0.45", linestyle=":", linewidth=1.0)
REF_LABEL = "paper reference"

plt.rcParams.update(
    {
        "svg.hashsalt": "dipoleforge",
        "svg.fonttype": "path",
        "font.size": 9,
        "figure.dpi": 100,
    }
)


class SchemaError(ValueError):
    """Input file missing, empty, or without a required column."""


def read_table(path: Path, columns: list[str]) -> pd.DataFrame:
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise SchemaError(f"{path}: empty file") from None
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
    if frame.empty:
        raise SchemaError(f"{path}: no rows")
    return frame


def read_json(path: Path, keys: list[str]) -> dict:
    if not path.is_file():
        raise SchemaError(f"{path}: file not found")
    text = path.read_text()
    if not text.strip():
        raise SchemaError(f"{path}: empty file")
    body = json.loads(text)
    for item in body if isinstance(body, list) else [body]:
        missing = [k for k in keys if k not in item]
        if missing:
            raise SchemaError(f"{path}: missing key(s) {', '.join(missing)}")
    return body


def save(fig: plt.Figure, out: Path, name: str) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{name}.svg", out / f"{name}.png"]
    fig.savefig(paths[0], metadata={"Date": None})
    fig.savefig(paths[1], metadata={"Software": None}, dpi=150)
    plt.close(fig)
    return paths


@dataclass
class Recipe:
    name: str
    inputs: dict[str, list[str]]  # relative path -> required columns or JSON keys
    draw: Callable[[Path], plt.Figure]
    description: str = ""

    def render(self, run_root: Path, out: Path) -> list[Path]:
        return save(self.draw(run_root), out, self.name)


# ---------------------------------------------------------------------------


def fig1c(root: Path) -> plt.Figure:
    t = read_table(root / "spectrum" / "transition_curve.csv", ["n", "omega_rad_s", "edm_C_m"])
    fig, ax = plt.subplots(figsize=(4.5, 3.2), layout="constrained")
    ax.plot(t["n"], t["omega_rad_s"] / TWO_PI / 1e6, color="tab:blue")
    ax.set_xlabel("n")
    ax.set_ylabel(r"$\omega_{n+1,n}/2\pi$ (MHz)", color="tab:blue")
    ax.axhline(59.9, **REF_STYLE, label=f"{REF_LABEL}: 59.9 MHz")
    ax2 = ax.twinx()
    ax2.plot(t["n"], t["edm_C_m"] / E_CHARGE * 1e6, color="tab:red")
    ax2.set_ylabel(r"$|\mu_{n+1,n}|$ ($e\,\mu$m)", color="tab:red")
    ax2.axhline(7.16, color="tab:red", linestyle=":", linewidth=1.0, label=f"{REF_LABEL}: 7.16 e$\\mu$m")
    lines = ax.get_legend_handles_labels()[0] + ax2.get_legend_handles_labels()[0]
    labels = ax.get_legend_handles_labels()[1] + ax2.get_legend_handles_labels()[1]
    ax.legend(lines, labels, loc="center right", fontsize=7)
    return fig


def fig2a(root: Path) -> plt.Figure:
    runs = []
    for run in sorted(root.glob("spectrum_d*")) or [root / "spectrum"]:
        manifest = read_json(run / "manifest.json", ["config", "results"])
        t = read_table(run / "transition_curve.csv", ["n", "omega_rad_s", "edm_C_m"])
        runs.append((manifest["config"]["potential"]["d_m"], t.set_index("n")))
    if not runs:
        raise SchemaError(f"{root}: no spectrum_d* or spectrum run directories")
    common = set.intersection(*(set(t.index) for _, t in runs))
    if not common:
        raise SchemaError(f"{root}: spectrum runs share no transition index n")
    n = max(common)
    runs.sort(key=lambda r: r[0])
    d = np.array([r[0] for r in runs]) * 1e6
    fig, ax = plt.subplots(figsize=(4.5, 3.2), layout="constrained")
    ax.plot(d, [t.loc[n, "omega_rad_s"] / TWO_PI / 1e6 for _, t in runs], "o-", color="tab:blue")
    ax.set_xlabel(r"$d$ ($\mu$m)")
    ax.set_ylabel(r"$\omega_{n+1,n}/2\pi$ (MHz)", color="tab:blue")
    ax2 = ax.twinx()
    ax2.plot(d, [t.loc[n, "edm_C_m"] / E_CHARGE * 1e6 for _, t in runs], "s-", color="tab:red")
    ax2.set_ylabel(r"$|\mu_{n+1,n}|$ ($e\,\mu$m)", color="tab:red")
    ax.set_title(f"n = {n}", fontsize=8)
    return fig


def fig3c(root: Path) -> plt.Figure:
    scan = read_table(root / "scan" / "scan.csv", ["a2_V_per_m2", "n", "energy_J"])
    graps = read_json(root / "scan" / "graps.json", ["a2_star", "gap_rad_s"])
    fig, (ax, gx) = plt.subplots(2, 1, figsize=(4.5, 5.0), layout="constrained", sharex=True,
                                 gridspec_kw={"height_ratios": [3, 1.4]})
    hbar = 1.054571817e-34
    for n, branch in scan.groupby("n"):
        branch = branch.sort_values("a2_V_per_m2")
        ax.plot(branch["a2_V_per_m2"], branch["energy_J"] / hbar / TWO_PI / 1e9, linewidth=0.8)
    ax.set_ylabel(r"$E_n/h$ (GHz)")
    if graps:
        a2 = [g["a2_star"] for g in graps]
        gap = [g["gap_rad_s"] / TWO_PI / 1e6 for g in graps]
        gx.semilogy(a2, gap, "o", markersize=3, color="k")
    gx.axhline(1.8, **REF_STYLE, label=f"{REF_LABEL}: 1.8 MHz gap")
    gx.set_xlabel(r"$a_2$ (V/m$^2$)")
    gx.set_ylabel("GRAP gap / 2π (MHz)")
    gx.legend(fontsize=7)
    return fig


def fig3e(root: Path) -> plt.Figure:
    scan = read_table(root / "evolve" / "fidelity_scan.csv", ["axis_value_s", "fidelity"])
    info = read_json(root / "evolve" / "evolve.json", ["scan"])
    axis = info["scan"].get("axis", "t1")
    fig, ax = plt.subplots(figsize=(4.5, 3.2), layout="constrained")
    ax.semilogx(scan["axis_value_s"] * 1e9, scan["fidelity"], "o-")
    ax.set_xlabel(f"${axis[0]}_{axis[1]}$ (ns)")
    ax.set_ylabel("F")
    if axis == "t1":
        ax.axvline(199.4, **REF_STYLE, label=f"{REF_LABEL}: 199.4 ns")
    else:
        ax.axvline(1750.0, **REF_STYLE, label=f"{REF_LABEL}: 1.75 $\\mu$s")
    ax.axhline(0.988, color="0.6", linestyle="--", linewidth=0.8, label=f"{REF_LABEL}: 98.8%")
    ax.legend(fontsize=7)
    return fig


def fig4a(root: Path) -> plt.Figure:
    r = read_table(root / "readout" / "readout.csv", ["transfer_time_s", "F_avg"])
    fig, ax = plt.subplots(figsize=(4.5, 3.2), layout="constrained")
    ax.semilogx(r["transfer_time_s"] * 1e9, r["F_avg"], "o-")
    ax.axvline(180.0, **REF_STYLE, label=f"{REF_LABEL}: 180 ns")
    ax.axhline(0.952, color="0.6", linestyle="--", linewidth=0.8, label=f"{REF_LABEL}: 95.2%")
    ax.set_xlabel(r"transfer time $\pi/2g$ (ns)")
    ax.set_ylabel(r"$F_\mathrm{avg}$")
    ax.legend(fontsize=7)
    return fig


def fig4b(root: Path) -> plt.Figure:
    s = read_table(root / "sense" / "susceptibility.csv", ["t_s", "susceptibility_per_V_m", "branch"])
    branches = set(s["branch"])
    needed = ["giant_dipole", "giant_dipole_noiseless"]
    missing = [b for b in needed if b not in branches]
    if missing:
        raise SchemaError(f"{root / 'sense' / 'susceptibility.csv'}: missing branch(es) {', '.join(missing)}")
    styles = {
        "giant_dipole_noiseless": dict(color="tab:blue", label=r"7.16 e$\mu$m, noiseless"),
        "giant_dipole": dict(color="tab:blue", linestyle="--", label=r"7.16 e$\mu$m, noise"),
        "dipole_1_e_um_noiseless": dict(color="tab:pink", label=r"1 e$\mu$m, noiseless"),
        "dipole_2_e_um_noiseless": dict(color="tab:green", label=r"2 e$\mu$m, noiseless"),
        "dipole_3_e_um_noiseless": dict(color="goldenrod", label=r"3 e$\mu$m, noiseless"),
    }
    fig, ax = plt.subplots(figsize=(4.5, 3.2), layout="constrained")
    for name, style in styles.items():
        b = s[s["branch"] == name].sort_values("t_s")
        if not b.empty:
            ax.plot(b["t_s"] * 1e6, b["susceptibility_per_V_m"], **style)
    ax.plot([1.0], [5.44e3], "x", color="0.3", label=r"$|\mu|t/2\hbar$ at 1 $\mu$s (7.16 e$\mu$m)")
    ax.set_xlabel(r"$t$ ($\mu$s)")
    ax.set_ylabel(r"$\partial p/\partial \mathcal{E}_z$ ((V/m)$^{-1}$)")
    ax.set_xlim(left=0)
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=6)
    return fig


RECIPES: dict[str, Recipe] = {
    r.name: r
    for r in [
        Recipe("fig1c", {"spectrum/transition_curve.csv": ["n", "omega_rad_s", "edm_C_m"]}, fig1c,
               "transition frequency and EDM against n"),
        Recipe("fig2a", {"spectrum_d*/transition_curve.csv": ["n", "omega_rad_s", "edm_C_m"]}, fig2a,
               "frequency and EDM against d over several spectrum runs"),
        Recipe("fig3c", {"scan/scan.csv": ["a2_V_per_m2", "n", "energy_J"], "scan/graps.json": ["a2_star", "gap_rad_s"]}, fig3c,
               "eigenenergies against a2 with GRAP gaps"),
        Recipe("fig3e", {"evolve/fidelity_scan.csv": ["axis_value_s", "fidelity"], "evolve/evolve.json": ["scan"]},
               fig3e, "initialization fidelity against stage time"),
        Recipe("fig4a", {"readout/readout.csv": ["transfer_time_s", "F_avg"]}, fig4a,
               "readout fidelity against transfer time"),
        Recipe("fig4b", {"sense/susceptibility.csv": ["t_s", "susceptibility_per_V_m", "branch"]}, fig4b,
               "susceptibility against interaction time"),
    ]
}


def main(names: list[str], argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Render " + ", ".join(names))
    parser.add_argument("--in", dest="run_root", type=Path, default=Path("runs"), help="run root directory")
    parser.add_argument("--out", type=Path, default=Path("figures_out"), help="output directory")
    args = parser.parse_args(argv)
    status = 0
    for name in names:
        try:
            for path in RECIPES[name].render(args.run_root, args.out):
                print(path)
        except SchemaError as err:
            print(f"{name}: {err}", file=sys.stderr)
            status = 1
    return status
