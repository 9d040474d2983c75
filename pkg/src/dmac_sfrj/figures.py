"""Matplotlib renderings of the experiment outputs, written next to the CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def step_response(records, path, title: str | None = None) -> Path:
    """Command/thrust, control, log tracking error and Theta, one panel each."""
    k = np.array([r.k for r in records])
    r = np.array([r_.r for r_ in records])
    y = np.array([r_.y for r_ in records])
    u = np.array([r_.u for r_ in records])
    z = np.abs(np.array([r_.z for r_ in records]))
    theta = np.array([r_.theta for r_ in records])
    with plt.rc_context(RC):
        fig, axes = plt.subplots(4, 1, figsize=(5.0, 7.0), sharex=True)
        axes[0].plot(k, r, "k--", label="$r_k$")
        axes[0].plot(k, y, "b", label="$y_k$")
        axes[0].set_ylabel("thrust [N]")
        axes[0].legend(loc="lower right")
        axes[1].plot(k, u, "b")
        axes[1].set_ylabel("$u_k$")
        axes[2].semilogy(k, np.maximum(z, 1e-12), "b")
        axes[2].set_ylabel("$|z_k|$ [N]")
        if theta.size:
            axes[3].plot(k, theta)
        axes[3].set_ylabel(r"$\Theta_k$")
        axes[3].set_xlabel("step $k$")
        if title:
            axes[0].set_title(title)
        return _save(fig, path)


def sensitivity(rows, path, command: float = 100.0) -> Path:
    """One row per hyperparameter: thrust traces and |z| traces across its grid."""
    params = []
    for row in rows:
        if row.param not in params:
            params.append(row.param)
    labels = {"r_theta": r"$R_\Theta$", "lam": r"$\lambda$", "r1": "$R_1$", "r2": "$R_2$"}
    with plt.rc_context(RC):
        fig, axes = plt.subplots(len(params), 2, figsize=(7.0, 1.8 * len(params)), squeeze=False, sharex=True)
        for i, p in enumerate(params):
            for row in (x for x in rows if x.param == p):
                lbl = f"{labels.get(p, p)}={row.value:g}"
                axes[i, 0].plot(row.y, label=lbl)
                axes[i, 1].semilogy(np.maximum(np.abs(row.z), 1e-12), label=lbl)
            axes[i, 0].axhline(command, color="k", ls="--", lw=0.8)
            axes[i, 0].set_ylabel("$y_k$ [N]")
            axes[i, 1].set_ylabel("$|z_k|$ [N]")
            axes[i, 1].legend(loc="upper right", ncol=2)
        axes[-1, 0].set_xlabel("step $k$")
        axes[-1, 1].set_xlabel("step $k$")
        return _save(fig, path)


def mc_params(summary, scatter_path, perf_path, stride: int, command: float = 100.0) -> tuple[Path, Path]:
    """Scatter of sampled ``(alpha, eta_c)`` by verdict, and converged thrust traces."""
    res = summary.results
    a = np.array([r.params["alpha"] for r in res])
    e = np.array([r.params["eta_c"] for r in res])
    ok = np.array([r.converged for r in res])
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.2))
        ax.scatter(a[ok], e[ok], s=10, c="tab:blue", label=f"converged ({ok.sum()})")
        ax.scatter(a[~ok], e[~ok], s=18, c="tab:red", marker="x", label=f"diverged ({(~ok).sum()})")
        ax.set_xlabel(r"$\alpha$")
        ax.set_ylabel(r"$\eta_c$")
        ax.legend()
        p1 = _save(fig, scatter_path)

        fig, ax = plt.subplots(figsize=(4.0, 3.2))
        for r in res:
            if r.converged and r.trace is not None:
                ax.plot(np.arange(len(r.trace)) * stride, r.trace, lw=0.5, alpha=0.5)
        ax.axhline(command, color="k", ls="--", lw=0.8)
        ax.set_xlabel("step $k$")
        ax.set_ylabel("thrust [N]")
        p2 = _save(fig, perf_path)
    return p1, p2


def mc_envelope(summary, scatter_path, perf_path, stride: int) -> tuple[Path, Path]:
    """Altitude vs command scatter by verdict, and normalized traces of converged runs."""
    h, c, ok = [], [], []
    for r in summary.results:
        for cmd, flag in zip(r.params.get("commands", []), r.params.get("run_converged", [])):
            h.append(r.params["altitude"] / 1e3)
            c.append(cmd)
            ok.append(flag)
    h, c, ok = np.array(h), np.array(c), np.array(ok, dtype=bool)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.2))
        if ok.size:
            ax.scatter(h[ok], c[ok], s=6, c="tab:blue", label=f"converged ({ok.sum()})")
            ax.scatter(h[~ok], c[~ok], s=18, c="tab:red", marker="x", label=f"diverged ({(~ok).sum()})")
        ax.set_xlabel("altitude [km]")
        ax.set_ylabel("command [N]")
        ax.set_yscale("log")
        ax.legend()
        p1 = _save(fig, scatter_path)

        fig, ax = plt.subplots(figsize=(4.0, 3.2))
        for r in summary.results:
            if r.trace is None:
                continue
            for flag, line in zip(r.params.get("run_converged", []), np.atleast_2d(r.trace)):
                if flag:
                    ax.plot(np.arange(len(line)) * stride, line, lw=0.4, alpha=0.4)
        ax.axhline(1.0, color="k", ls="--", lw=0.8)
        ax.set_xlabel("step $k$")
        ax.set_ylabel("$y_k / r$")
        p2 = _save(fig, perf_path)
    return p1, p2


def open_loop(r0_grid, outs, path) -> Path:
    """Thrust, aft pressure and CO fraction across the cowl sweep."""
    r0 = np.asarray(r0_grid) * 1e3
    with plt.rc_context(RC):
        fig, axes = plt.subplots(3, 1, figsize=(4.0, 5.5), sharex=True)
        axes[0].plot(r0, [o.thrust for o in outs], "b.-")
        axes[0].set_ylabel("thrust [N]")
        axes[1].plot(r0, [o.pt4 for o in outs], "b.-")
        axes[1].set_ylabel("$P_{t4}$ [Pa]")
        axes[2].plot(r0, [o.x_co for o in outs], "b.-")
        axes[2].set_ylabel("$X_{CO}$")
        axes[2].set_xlabel("$r_0$ [mm]")
        return _save(fig, path)
