"""CSV emission and figure rendering for run artifacts.

All numeric CSV fields use fixed 17-significant-digit scientific notation so
identical runs produce byte-identical files.  Figures are rendered headless
to PNG next to the delimited output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .grid import integrate, write_snapshot


def _fmt(x):
    return f"{float(x):.16e}"


def write_series_csv(path, traj):
    """Per-step biomass series: t, mass_M, min_M, max_M, energy_increment."""
    with open(path, "w") as fh:
        fh.write("t,mass_M,min_M,max_M,energy_increment\n")
        for n, t in enumerate(traj.times):
            m = traj.Ms[n]
            energy = traj.energy_increments[n - 1] if n >= 1 else 0.0
            fh.write(
                ",".join(
                    [
                        _fmt(t),
                        _fmt(integrate(traj.grid, m, "mass")),
                        _fmt(np.min(m)),
                        _fmt(np.max(m)),
                        _fmt(energy),
                    ]
                )
                + "\n"
            )


def write_substrate_csv(path, result):
    grid = result.M.grid
    k = len(result.S)
    with open(path, "w") as fh:
        cols = ["t"]
        for j in range(k):
            cols += [f"mass_S{j}", f"min_S{j}", f"max_S{j}"]
        fh.write(",".join(cols) + "\n")
        for n, t in enumerate(result.M.times):
            row = [_fmt(t)]
            for j in range(k):
                s = result.S[j].fields[n]
                row += [_fmt(integrate(grid, s, "mass")), _fmt(np.min(s)), _fmt(np.max(s))]
            fh.write(",".join(row) + "\n")


def write_fixedpoint_csv(path, fp_log):
    with open(path, "w") as fh:
        fh.write("window,sweep,l1_distance,wall_time\n")
        for rec in fp_log:
            fh.write(f"{rec.window},{rec.sweep},{_fmt(rec.l1_distance)},{_fmt(rec.wall_time)}\n")


def write_bounds_csv(path, report):
    """Envelope curves plus classification in header comments."""
    with open(path, "w") as fh:
        fh.write(f"# classification = {report.classification}\n")
        fh.write(f"# delta = {'' if report.delta is None else _fmt(report.delta)}\n")
        if report.checkM is None:
            fh.write("# comparison = unavailable (needs exactly one substrate)\n")
            fh.write("t,hatM\n")
            for t, hm in zip(report.t_grid, report.hatM):
                fh.write(f"{_fmt(t)},{_fmt(hm)}\n")
        else:
            fh.write("t,checkM,checkS,hatM,hatS\n")
            for t, cm, cs, hm, hs in zip(
                report.t_grid, report.checkM, report.checkS, report.hatM, report.hatS
            ):
                fh.write(
                    f"{_fmt(t)},{_fmt(cm)},{_fmt(cs)},{_fmt(hm)},{_fmt(hs)}\n"
                )


def write_convergence_csv(path, axis, labels, errors, orders):
    with open(path, "w") as fh:
        fh.write(f"level,{axis},error_l1,observed_order\n")
        for i, (lab, err) in enumerate(zip(labels, errors)):
            p = "" if i >= len(orders) else _fmt(orders[i])
            fh.write(f"{i},{_fmt(lab)},{_fmt(err)},{p}\n")


def write_summary(path, entries):
    with open(path, "w") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def write_snapshots(out_dir, result, stride):
    out_dir = Path(out_dir)
    if stride <= 0:
        return []
    paths = []
    traj = result.M
    for n in range(0, len(traj.times), stride):
        p = out_dir / f"snapshot_M_{n:06d}.txt"
        write_snapshot(p, traj.grid, traj.Ms[n], traj.times[n])
        paths.append(p)
        for j, hist in enumerate(result.S):
            ps = out_dir / f"snapshot_S{j}_{n:06d}.txt"
            write_snapshot(ps, traj.grid, hist.fields[n], traj.times[n])
            paths.append(ps)
    return paths


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def plot_series(traj, path, report=None):
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ts = traj.times
    ax.plot(ts, [np.max(m) for m in traj.Ms], label="max M", color="C3")
    ax.plot(ts, [np.min(m) for m in traj.Ms], label="min M", color="C0")
    ax.plot(ts, traj.mass_series(), label="mass", color="C2", ls="--")
    if report is not None and report.checkM is not None:
        ax.plot(report.t_grid, report.hatM, color="k", lw=0.8, label="comparison envelope")
        ax.plot(report.t_grid, report.checkM, color="k", lw=0.8, ls=":")
    if traj.blown_up:
        ax.axvline(traj.t_blowup, color="r", lw=0.8, ls="-.", label=f"blow-up t*={traj.t_blowup:.3g}")
    ax.set_xlabel("t")
    ax.set_ylabel("biomass")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def plot_final_state(result, path):
    traj = result.M
    grid = traj.grid
    if grid.dim == 1:
        fig, ax = plt.subplots(figsize=(7, 4.2))
        x = grid.centers(0)
        ax.plot(x, traj.Ms[-1], label="M", color="C3")
        for j, hist in enumerate(result.S):
            ax.plot(x, hist.fields[-1], label=f"S{j}", ls="--")
        ax.set_xlabel("x")
        ax.legend(fontsize=8)
        ax.grid(True, alpha=0.3)
    else:
        k = len(result.S)
        fig, axes = plt.subplots(1, 1 + k, figsize=(4.5 * (1 + k), 3.8), squeeze=False)
        im = axes[0, 0].imshow(
            traj.Ms[-1].T, origin="lower", aspect="auto",
            extent=(*grid.extents[0], *grid.extents[1]),
        )
        axes[0, 0].set_title("M")
        fig.colorbar(im, ax=axes[0, 0])
        for j, hist in enumerate(result.S):
            im = axes[0, 1 + j].imshow(
                hist.fields[-1].T, origin="lower", aspect="auto",
                extent=(*grid.extents[0], *grid.extents[1]),
            )
            axes[0, 1 + j].set_title(f"S{j}")
            fig.colorbar(im, ax=axes[0, 1 + j])
    fig.suptitle(f"t = {traj.times[-1]:.4g}")
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def plot_bounds(report, path):
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(report.t_grid, report.hatM, label="hat M", color="C3")
    if report.checkM is not None:
        ax.plot(report.t_grid, report.checkM, label="check M", color="C3", ls="--")
        ax.plot(report.t_grid, report.hatS, label="hat S", color="C0")
        ax.plot(report.t_grid, report.checkS, label="check S", color="C0", ls="--")
    ax.axhline(1.0, color="k", lw=0.6)
    if report.t_star is not None:
        ax.axvline(report.t_star, color="r", lw=0.8, ls="-.", label=f"t*={report.t_star:.4g}")
    ax.set_xlabel("t")
    ax.set_title(str(report.classification))
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def plot_convergence(axis, labels, errors, path):
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    ax.loglog(labels, errors, "o-", label="L1 error")
    ref = [errors[0] * labels[i] / labels[0] for i in range(len(labels))]
    ax.loglog(labels, ref, "k--", lw=0.7, label="first order")
    ax.set_xlabel(axis)
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)


def plot_fixedpoint(fp_log, path):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    windows = sorted({rec.window for rec in fp_log})
    for w in windows:
        rows = [rec for rec in fp_log if rec.window == w]
        ax.semilogy([r.sweep for r in rows], [max(r.l1_distance, 1e-300) for r in rows],
                    "o-", ms=3, lw=0.8)
    ax.set_xlabel("sweep")
    ax.set_ylabel("inter-sweep L1(Q) distance")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=140)
    plt.close(fig)
