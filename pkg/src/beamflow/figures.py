"""Figure rendering for the CLI report path.

The library computes tables; this module turns the tables the CLI writes
into quick-look PNGs saved next to the delimited output.  Nothing here is
part of the numerical API.
"""

from __future__ import annotations

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 130,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def line_plot(path, x, ys, xlabel, ylabel, labels=None, title=None, logy=False):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ys = np.atleast_2d(np.asarray(ys))
        for i, y in enumerate(ys):
            lab = labels[i] if labels else None
            ax.plot(x, y, lw=1.2, label=lab)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if labels:
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def heatmap(path, x, y, values, xlabel, ylabel, title=None, clabel=None):
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        extent = [x[0], x[-1], y[0], y[-1]]
        im = ax.imshow(np.asarray(values).T, origin="lower", aspect="auto",
                       extent=extent, cmap="magma")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        cb = fig.colorbar(im, ax=ax)
        if clabel:
            cb.set_label(clabel)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
