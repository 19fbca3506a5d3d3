"""Posterior summaries, Gelman-Rubin diagnostics and plot-data export."""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateChainsWarning, UnknownParameter

N_BINS = 64


def gelman_rubin(chains, split=False):
    """Potential scale reduction factor of one scalar quantity.

    Parameters
    ----------
    chains : array_like, shape (m, n)
        ``m >= 2`` chains of equal length ``n >= 4``.
    split : bool
        Split each chain in halves first.

    Returns
    -------
    float
        sqrt(V / W') where V = (n-1)/n W + (1 + 1/m) B/n and
        W' = (n-1)/n W, so that chains with identical means give exactly 1.
        Returns 1 when every chain is constant at the same value and inf
        (with a warning) when they are constant at different values.
    """
    x = np.asarray(chains, dtype=float)
    if split:
        h = x.shape[1] // 2
        x = np.concatenate([x[:, :h], x[:, x.shape[1] - h:]], axis=0)
    m, n = x.shape
    if m < 2 or n < 4:
        raise ValueError("gelman_rubin needs at least 2 chains of length >= 4")
    means = x.mean(axis=1)
    W = float(np.mean(x.var(axis=1, ddof=1)))
    B_over_n = float(np.var(means, ddof=1))
    if W <= 0:
        if B_over_n <= 0:
            return 1.0
        warnings.warn("zero within-chain variance with distinct chain means",
                      DegenerateChainsWarning, stacklevel=2)
        return np.inf
    within = (n - 1) / n * W
    V = within + (1.0 + 1.0 / m) * B_over_n
    return float(np.sqrt(V / within))


@dataclass
class PosteriorSummary:
    """Per-parameter mean, SD, 2.5% and 97.5% quantiles and R-hat."""

    names: list
    mean: np.ndarray
    sd: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    rhat: np.ndarray = None
    n_chains: int = 1
    n_draws: int = 0

    def row(self, name):
        try:
            i = self.names.index(name)
        except ValueError:
            raise UnknownParameter(name) from None
        out = {"mean": float(self.mean[i]), "sd": float(self.sd[i]),
               "q2.5": float(self.q025[i]), "q97.5": float(self.q975[i])}
        if self.rhat is not None:
            out["rhat"] = float(self.rhat[i])
        return out

    def to_dict(self):
        return {
            "n_chains": self.n_chains,
            "n_draws_per_chain": self.n_draws,
            "parameters": {nm: self.row(nm) for nm in self.names},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_table(self):
        """Aligned text table with Est., SD., 2.5%, 97.5% and R-hat columns."""
        head = ["Parameter", "Est.", "SD.", "2.5%", "97.5%"]
        if self.rhat is not None:
            head.append("R-hat")
        rows = []
        for i, nm in enumerate(self.names):
            r = [nm, f"{self.mean[i]:.3f}", f"{self.sd[i]:.3f}", f"{self.q025[i]:.3f}",
                 f"{self.q975[i]:.3f}"]
            if self.rhat is not None:
                r.append(f"{self.rhat[i]:.3f}")
            rows.append(r)
        widths = [max(len(r[j]) for r in rows + [head]) for j in range(len(head))]
        lines = ["  ".join(h.ljust(w) if j == 0 else h.rjust(w)
                           for j, (h, w) in enumerate(zip(head, widths)))]
        for r in rows:
            lines.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w)
                                   for j, (c, w) in enumerate(zip(r, widths))))
        return "\n".join(lines) + "\n"


def _stack(chains):
    """Draw arrays of shape (n_chains, n_draws, n_params)."""
    arrs = [np.asarray(getattr(c, "draws", c), dtype=float) for c in chains]
    if not arrs:
        raise ValueError("no chains")
    n = min(a.shape[0] for a in arrs)
    if any(a.shape[0] != n for a in arrs):
        raise ValueError("chains have different lengths")
    return np.stack([a.reshape(n, -1) for a in arrs])


def summarize(chains, names, parameters=None, rhat=True, split=False):
    """Pooled posterior summary.

    Parameters
    ----------
    chains : list of ChainOutput or arrays (n_draws, n_params)
    names : list of str
        Column names of the draw arrays.
    parameters : list of str, optional
        Subset to summarize; unknown names raise UnknownParameter.
    rhat : bool
        Compute R-hat (only possible with two or more chains).
    """
    x = _stack(chains)
    names = list(names)
    if parameters is None:
        idx = list(range(len(names)))
    else:
        idx = []
        for p in parameters:
            if p not in names:
                raise UnknownParameter(p)
            idx.append(names.index(p))
    x = x[:, :, idx]
    pooled = x.reshape(-1, x.shape[2])
    mean = pooled.mean(axis=0)
    sd = pooled.std(axis=0, ddof=1) if pooled.shape[0] > 1 else np.zeros(len(idx))
    const = np.all(pooled == pooled[:1], axis=0)
    mean = np.where(const, pooled[0], mean)
    sd = np.where(const, 0.0, sd)
    q = np.quantile(pooled, [0.025, 0.975], axis=0)
    r = None
    if rhat and x.shape[0] >= 2:
        r = np.array([gelman_rubin(x[:, :, j], split=split) for j in range(len(idx))])
    return PosteriorSummary([names[i] for i in idx], mean, sd, q[0], q[1], r,
                            n_chains=x.shape[0], n_draws=x.shape[1])


def export_plot_data(chains, names, kind):
    """Long-format rows for trace, density or caterpillar plots.

    Returns
    -------
    (header, rows)
        ``trace``: chain, iteration, parameter, value.
        ``density``: parameter, chain, bin, lower, upper, count, with 64 bins
        on a range shared by all chains.
        ``caterpillar``: parameter, mean, q2.5, q97.5.
    """
    x = _stack(chains)
    names = list(names)
    if kind == "trace":
        rows = []
        for c in range(x.shape[0]):
            for i in range(x.shape[1]):
                for j, nm in enumerate(names):
                    rows.append((c + 1, i + 1, nm, x[c, i, j]))
        return ("chain", "iteration", "parameter", "value"), rows
    if kind == "density":
        rows = []
        for j, nm in enumerate(names):
            lo, hi = float(x[:, :, j].min()), float(x[:, :, j].max())
            if hi <= lo:
                lo, hi = lo - 0.5, hi + 0.5
            edges = np.linspace(lo, hi, N_BINS + 1)
            for c in range(x.shape[0]):
                counts, _ = np.histogram(x[c, :, j], bins=edges)
                for k in range(N_BINS):
                    rows.append((nm, c + 1, k + 1, edges[k], edges[k + 1], int(counts[k])))
        return ("parameter", "chain", "bin", "lower", "upper", "count"), rows
    if kind == "caterpillar":
        s = summarize(chains, names, rhat=False)
        rows = [(nm, s.mean[i], s.q025[i], s.q975[i]) for i, nm in enumerate(names)]
        return ("parameter", "mean", "q2.5", "q97.5"), rows
    raise ValueError(f"unknown plot kind {kind!r}")
