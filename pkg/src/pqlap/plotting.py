"""Optional figures for the CLI report path (``--plots``); needs matplotlib."""

from .errors import InvalidArgument


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise InvalidArgument("--plots needs matplotlib (pip install 'artifact[plots]')") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_sequences(eta_pairs, nu_pairs, path):
    """eta_h and nu_h against h, one line per (kind, alpha), log scale."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    groups = {}
    for pr in list(eta_pairs) + list(nu_pairs):
        groups.setdefault((pr.kind, pr.alpha), []).append((pr.h, pr.value))
    for (kind, alpha), pts in sorted(groups.items()):
        h, v = zip(*sorted(pts))
        ax.plot(h, v, "o-" if kind == "eta" else "s--", ms=4,
                label=rf"$\{kind}_h$, $\alpha={alpha:g}$")
    ax.set_yscale("log")
    ax.set_xlabel("h")
    ax.set_ylabel("value")
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_fields(funcs, labels, path):
    """Nodal values of 1D fields on one axis (2D fields are exported as VTK instead)."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for u, lab in zip(funcs, labels):
        if u.mesh.dim != 1:
            raise InvalidArgument("plot_fields draws 1D fields only")
        x = u.mesh.nodes[:, 0]
        order = x.argsort()
        ax.plot(x[order], u.nodal_values()[order], lw=1.2, label=lab)
    ax.axhline(0.0, color="0.6", lw=0.6)
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
