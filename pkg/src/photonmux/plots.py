"""Figure rendering for experiment results (matplotlib, Agg backend).

Each experiment kind gets one PNG next to its CSV, drawn from the same
rows that went into the CSV so the figure and the data cannot diverge.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _col(header, rows, name, numeric=True):
    i = header.index(name)
    vals = [row[i] for row in rows]
    return np.asarray(vals, dtype=float) if numeric else vals


def _group_plot(ax, x, y, groups, xlabel, ylabel, logy=False):
    for g in dict.fromkeys(groups):
        sel = [i for i, gg in enumerate(groups) if gg == g]
        ax.plot(x[sel], y[sel], marker="o", label=str(g))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale("log")
    ax.legend()
    ax.grid(True, alpha=0.3)


def render_figures(kind, header, rows, out_dir):
    """Render the standard figure(s) for one experiment kind."""
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(7, 5))
    try:
        if kind == "rate-sum":
            _group_plot(ax, _col(header, rows, "symbols"),
                        _col(header, rows, "sum_rate"),
                        _col(header, rows, "delay", numeric=False),
                        "symbols per layer", "sum rate (bits/symbol)")
            ax.set_xscale("log")
        elif kind == "rate-single":
            ax.plot(_col(header, rows, "lambda"), _col(header, rows, "rate"),
                    marker="o")
            ax.set_xlabel("layer intensity")
            ax.set_ylabel("rate (bits/symbol)")
            ax.grid(True, alpha=0.3)
        elif kind == "layer-select":
            _group_plot(ax, _col(header, rows, "lambda"),
                        _col(header, rows, "sum_rate"),
                        [f"L={int(v)}" for v in _col(header, rows, "layers")],
                        "per-layer intensity", "sum rate (bits/symbol)")
        elif kind == "power-alloc":
            if "lambda_s" in header:
                x = _col(header, rows, "lambda_s")
                ax.plot(x, _col(header, rows, "lambda_1") / x, marker="o",
                        label="layer-1 share")
                ax2 = ax.twinx()
                ax2.plot(x, _col(header, rows, "sum_rate"), marker="s",
                         color="tab:orange", label="sum rate")
                ax2.set_ylabel("sum rate (bits/symbol)")
                ax.set_xlabel("total intensity")
                ax.set_ylabel("optimal layer-1 share")
            else:
                ax.plot(_col(header, rows, "r2_floor"),
                        _col(header, rows, "r1"), marker="o")
                ax.set_xlabel("layer-2 rate floor")
                ax.set_ylabel("layer-1 rate (bits/symbol)")
            ax.grid(True, alpha=0.3)
        elif kind == "estimate":
            states = _col(header, rows, "state").astype(int)
            lps = _col(header, rows, "pilot_layers").astype(int)
            iters = _col(header, rows, "iteration")
            vals = _col(header, rows, "rate")
            for lp in sorted(set(lps)):
                for s in sorted(set(states)):
                    sel = (lps == lp) & (states == s)
                    ax.plot(iters[sel], vals[sel],
                            label=f"L_p={lp}, state {s}")
            ax.set_xlabel("EM iteration")
            ax.set_ylabel("estimated state rate")
            ax.legend(fontsize=7)
            ax.grid(True, alpha=0.3)
        elif kind == "detect":
            post = _col(header, rows, "posterior")
            if np.isfinite(post).any():
                ax.hist(post[np.isfinite(post)], bins=40)
                ax.set_xlabel("posterior P(bit = 1)")
            else:
                ax.hist(_col(header, rows, "bit"), bins=3)
                ax.set_xlabel("detected bit")
            ax.set_ylabel("count")
        elif kind == "ber-sim":
            lam = _col(header, rows, "lambda_ave")
            rho = _col(header, rows, "rho", numeric=False)
            for g in dict.fromkeys(rho):
                sel = [i for i, r in enumerate(rho) if r == g]
                ax.semilogy(lam[sel], _col(header, rows, "uncoded_ser")[sel],
                            marker="o", label=f"SER rho={g}")
                ax.semilogy(lam[sel],
                            np.maximum(_col(header, rows, "coded_ber")[sel],
                                       1e-7),
                            marker="s", linestyle="--", label=f"BER rho={g}")
            ax.set_xlabel("per-layer intensity")
            ax.set_ylabel("error rate")
            ax.legend(fontsize=8)
            ax.grid(True, which="both", alpha=0.3)
        elif kind == "ook-vs-ppm":
            x = _col(header, rows, "lambda1")
            ax.plot(x, _col(header, rows, "i_ook"), marker="o", label="OOK")
            ax.plot(x, _col(header, rows, "i_ppm"), marker="s", label="2-PPM")
            ax.set_xlabel("signal intensity")
            ax.set_ylabel("mutual information (bits)")
            ax.legend()
            ax.grid(True, alpha=0.3)
        else:
            plt.close(fig)
            return []
        fig.tight_layout()
        path = out_dir / f"{kind}.png"
        fig.savefig(path, dpi=120)
        return [path]
    finally:
        plt.close(fig)
