"""Figures for runner reports (PNG through the Agg backend)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no timestamps or version strings in the files
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_ids(est, path, reference=None, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(est.energies, est.mean, yerr=est.stderr, fmt=".-", ms=3, lw=1, capsize=2,
                label=f"{est.method}, {est.n_realizations} realizations")
    if reference is not None:
        E, N, label = reference
        ax.plot(E, N, "k--", lw=1, label=label)
    ax.set_xlabel("E")
    ax.set_ylabel("N(E)")
    ax.set_title(title or "integrated density of states")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_bands(band, path, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    if band.d == 1:
        th = band.thetas[:, 0]
        for j in range(band.bands.shape[1]):
            ax.plot(th, band.bands[:, j], lw=1.2, label=f"E_{j}")
        ax.set_xlabel("theta")
        ax.legend(frameon=False, fontsize=8)
    else:
        n = band.n
        img = band.bands[:, 0].reshape(n, n)
        lim = np.pi / (2 * band.k + 1)
        im = ax.imshow(img.T, origin="lower", extent=[-lim, lim, -lim, lim], cmap="viridis")
        fig.colorbar(im, ax=ax, label="E_0")
        ax.set_xlabel("theta_1")
        ax.set_ylabel("theta_2")
    ax.set_title(title or "Floquet bands")
    return _save(fig, path)


def plot_lifshitz(fit, path, title=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.asarray(fit.x)
    ax.plot(x, fit.y, "o", ms=4, label="tail points")
    xs = np.linspace(x.min(), x.max(), 50)
    ax.plot(xs, fit.intercept + fit.slope * xs, "r-", lw=1, label=f"slope {fit.slope:.3f}")
    if fit.d is not None:
        xm, ym = x.mean(), np.mean(fit.y)
        ax.plot(xs, ym - fit.d / 2 * (xs - xm), "k:", lw=1, label=f"slope {-fit.d / 2:g}")
    ax.set_xlabel("log E")
    ax.set_ylabel("log|log N(E)|")
    ax.set_title(title or "Lifshitz tail")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def plot_convergence(rows, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for E in sorted({r["E"] for r in rows}):
        sub = [r for r in rows if r["E"] == E]
        ax.errorbar([r["k"] for r in sub], [r["deviation"] for r in sub],
                    yerr=[np.hypot(r["stderr"], r["reference_stderr"]) for r in sub],
                    fmt="o-", ms=3, capsize=2, label=f"E = {E:g}")
    ax.set_xlabel("k")
    ax.set_ylabel("|E N_k - N_ref|")
    ax.set_title("periodic approximation")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)
