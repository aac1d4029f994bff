import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt

from trailercf.evaluation import summarize_sweep


class multi_plot:
    """
    One figure with a subplot per entry of ``params``, each drawn by ``fun_plot(param, ax=ax, **kwargs)``.

    Keyword arguments: ``mp_title``, ``mp_ncols``, ``mp_figsize``, ``f_names`` (subplot titles)
    and ``fontsize``.
    """

    def __init__(self, params, fun_plot, **kwargs):
        title = kwargs.pop("mp_title", "")
        ncols = min(kwargs.pop("mp_ncols", len(params)), max(len(params), 1))
        figsize = kwargs.pop("mp_figsize", (4 * ncols, 4))
        f_names = kwargs.pop("f_names", [None for n in range(len(params))])
        fontsize = kwargs.pop("fontsize", 10)
        nrows = max(int(np.ceil(len(params) / ncols)), 1)
        self.fig = plt.figure(figsize=figsize)
        if not isinstance(fun_plot, list):
            fun_plot = [fun_plot for n in range(len(params))]
        for j, (param, f_name, fun) in enumerate(zip(params, f_names, fun_plot)):
            ax = self.fig.add_subplot(nrows, ncols, j + 1)
            fun(param, ax=ax, **kwargs)
            if f_name is not None:
                ax.set_title(f_name, fontsize=fontsize)
        if title:
            self.fig.suptitle(title, fontsize=12, fontweight="bold")
        self.fig.tight_layout()

    def save(self, path):
        self.fig.savefig(path, dpi=100)
        plt.close(self.fig)
        return path


def _plot_series(xfx, ax, **kwargs):
    x, fx = xfx
    ax.plot(x, fx, kwargs.get("fmt", "-o"), markersize=kwargs.get("markersize", 3))
    ax.set_xlabel(kwargs.get("xlabel", ""))
    ax.grid(True, alpha=0.3)


def plot_history(history, path):
    """Training loss and validation AUC per epoch, the best epoch marked."""
    frame = history.to_frame()

    def loss(param, ax, **kwargs):
        _plot_series(param, ax, xlabel="epoch")
        ax.axhline(np.log(2.0), color="grey", linestyle="--", linewidth=1, label="ln 2")
        ax.legend()

    def validation(param, ax, **kwargs):
        _plot_series(param, ax, xlabel="epoch")
        if history.best_epoch >= 0:
            ax.axvline(history.best_epoch, color="r", linestyle=":", linewidth=1)

    params = [
        (frame["epoch"].to_numpy(), frame["train_loss"].to_numpy()),
        (frame["epoch"].to_numpy(), frame["validation_auc"].to_numpy()),
    ]
    figure = multi_plot(params, [loss, validation], f_names=["train loss", "validation AUC"], mp_title="training")
    return figure.save(path)


def plot_sweep(rows, path):
    """Seed averaged cold-start and in-matrix AUC against the filter width, one line per residual option."""
    summary = summarize_sweep(rows)

    def panel(column, ax, **kwargs):
        for residual, group in summary.groupby("residual", sort=True):
            ax.plot(group["filter_width"], group[column], "-o", markersize=4, label=f"residual {residual}")
        ax.axhline(0.5, color="grey", linestyle="--", linewidth=1)
        ax.set_xlabel("filter width (frames)")
        ax.set_xscale("log", base=2)
        ax.grid(True, alpha=0.3)
        ax.legend()

    figure = multi_plot(
        ["cold_start_auc", "in_matrix_auc"], panel, f_names=["cold-start AUC", "in-matrix AUC"], mp_title="ablation"
    )
    return figure.save(path)
