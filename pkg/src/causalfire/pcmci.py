"""Lagged causal discovery over preprocessed multivariate time series.

The two-phase procedure: a per-variable condition-selection pass (iterative
partial-correlation filtering with growing conditioning sets) followed by
momentary conditional-independence tests of every admissible lagged link,
conditioning on the selected parents of both endpoints. Retained links carry
the partial-correlation strength and its p-value.

Kind-based link assumptions encode the mediator ordering: slow large-scale
drivers (oci) may influence anything, local weather may influence local
weather and the target, the target influences nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DegenerateSeriesError,
    InsufficientDataError,
)
from .stats import CITestResult, parcorr_pvalue, partial_correlation

__all__ = [
    "TimeSeriesDataset",
    "LinkAssumptions",
    "CausalLink",
    "CausalGraph",
    "preprocess_causal_stationarity",
    "pc1_select_parents",
    "mci_test",
    "run_pcmci",
]

KINDS = ("target", "local", "oci")

# Which source kinds may drive which destination kinds.
_KIND_MAY_DRIVE = {
    "oci": {"oci", "local", "target"},
    "local": {"local", "target"},
    "target": set(),
}


@dataclass
class TimeSeriesDataset:
    """Aligned multivariate series with per-variable kinds.

    values is (T, C); kinds entries are 'target', 'local' or 'oci' with
    exactly one target variable.
    """

    values: np.ndarray
    names: list[str]
    kinds: list[str]

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("values must be a (T, C) matrix")
        c = self.values.shape[1]
        if len(self.names) != c or len(self.kinds) != c:
            raise DataError("names/kinds length must match the number of columns")
        if len(set(self.names)) != c:
            raise DataError("variable names must be unique")
        for k in self.kinds:
            if k not in KINDS:
                raise DataError(f"unknown variable kind {k!r}")
        if sum(k == "target" for k in self.kinds) != 1:
            raise DataError("exactly one target variable is required")
        if not np.all(np.isfinite(self.values)):
            raise DataError("values contain NaN or infinity")

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def target_index(self) -> int:
        return self.kinds.index("target")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def indices_of_kind(self, kind: str) -> list[int]:
        return [i for i, k in enumerate(self.kinds) if k == kind]


@dataclass(frozen=True)
class LinkAssumptions:
    """Admissible directed lagged candidates (i, tau) -> j, tau in [0, tau_max]."""

    allowed: dict[int, frozenset[tuple[int, int]]]
    tau_max: int

    @staticmethod
    def mediator_ordering(
        kinds: list[str],
        tau_max: int,
        include_contemporaneous: bool = True,
        target_autolinks: bool = False,
    ) -> "LinkAssumptions":
        """Build the kind-ordered assumption set.

        target_autolinks additionally admits lagged self-links of the target,
        which only affect conditioning sets (the adjacency masks the target).
        """
        n = len(kinds)
        tau_lo = 0 if include_contemporaneous else 1
        allowed: dict[int, frozenset[tuple[int, int]]] = {}
        for j in range(n):
            pairs = set()
            for i in range(n):
                may_drive = kinds[j] in _KIND_MAY_DRIVE[kinds[i]]
                if i == j:
                    if kinds[i] == "target":
                        if not target_autolinks:
                            continue
                    elif not may_drive:
                        continue
                    for tau in range(1, tau_max + 1):
                        pairs.add((i, tau))
                    continue
                if not may_drive:
                    continue
                for tau in range(tau_lo, tau_max + 1):
                    pairs.add((i, tau))
            allowed[j] = frozenset(pairs)
        return LinkAssumptions(allowed=allowed, tau_max=tau_max)

    def candidates(self, j: int, tau_min: int = 0) -> list[tuple[int, int]]:
        return sorted(p for p in self.allowed.get(j, frozenset()) if p[1] >= tau_min)

    def permits(self, source: int, lag: int, target: int) -> bool:
        return (source, lag) in self.allowed.get(target, frozenset())


@dataclass(frozen=True)
class CausalLink:
    """Directed lagged link (source, lag) -> target with its MCI statistics."""

    source: int
    lag: int
    target: int
    mci: float
    pvalue: float

    @property
    def contemporaneous(self) -> bool:
        return self.lag == 0


@dataclass
class CausalGraph:
    """Thresholded output of causal discovery."""

    names: list[str]
    kinds: list[str]
    tau_max: int
    alpha: float
    links: list[CausalLink] = field(default_factory=list)

    def __post_init__(self) -> None:
        for link in self.links:
            if abs(link.mci) > 1.0 + 1e-12:
                raise ContractError("link strength must satisfy |mci| <= 1")

    @property
    def target_index(self) -> int:
        return self.kinds.index("target")

    def links_into(self, j: int) -> list[CausalLink]:
        return [l for l in self.links if l.target == j]

    def lagged_links(self) -> list[CausalLink]:
        """Directed links only (lag >= 1); contemporaneous ones are diagnostic."""
        return [l for l in self.links if l.lag >= 1]

    def edge_set(self) -> set[tuple[int, int, int]]:
        return {(l.source, l.lag, l.target) for l in self.lagged_links()}

    def to_dict(self) -> dict:
        return {
            "variables": list(self.names),
            "kinds": list(self.kinds),
            "tau_max": self.tau_max,
            "alpha": self.alpha,
            "links": [
                {
                    "source": self.names[l.source],
                    "lag": l.lag,
                    "target": self.names[l.target],
                    "mci": l.mci,
                    "pvalue": l.pvalue,
                }
                for l in self.links
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "CausalGraph":
        names = list(d["variables"])
        index = {n: i for i, n in enumerate(names)}
        links = [
            CausalLink(
                source=index[e["source"]],
                lag=int(e["lag"]),
                target=index[e["target"]],
                mci=float(e["mci"]),
                pvalue=float(e["pvalue"]),
            )
            for e in d["links"]
        ]
        return CausalGraph(
            names=names,
            kinds=list(d["kinds"]),
            tau_max=int(d["tau_max"]),
            alpha=float(d["alpha"]),
            links=links,
        )

    @staticmethod
    def from_json(text: str) -> "CausalGraph":
        return CausalGraph.from_dict(json.loads(text))

    def to_dot(self) -> str:
        """DOT text for external rendering; lag-0 links drawn undirected-style."""
        lines = ["digraph causal {"]
        for name, kind in zip(self.names, self.kinds):
            shape = {"target": "doublecircle", "local": "ellipse", "oci": "box"}[kind]
            lines.append(f'  "{name}" [shape={shape}];')
        for l in self.links:
            style = ' style=dashed dir=none' if l.contemporaneous else ""
            lines.append(
                f'  "{self.names[l.source]}" -> "{self.names[l.target]}"'
                f' [label="lag {l.lag}, mci {l.mci:+.2f}"{style}];'
            )
        lines.append("}")
        return "\n".join(lines) + "\n"


def preprocess_causal_stationarity(
    raw: np.ndarray,
    period: int,
    names: list[str],
    kinds: list[str],
    season_length: int = 12,
) -> TimeSeriesDataset:
    """Resample to the coarse interval and remove seasonal structure.

    Blocks of ``period`` consecutive rows are averaged, the per-phase
    climatological mean over the ``season_length`` cycle is subtracted from
    each column, and columns are centered exactly.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2:
        raise DataError("raw values must be a (T, C) matrix")
    if period < 1:
        raise ConfigError("resampling period must be >= 1")
    t_raw = raw.shape[0]
    if t_raw < 2 * period:
        raise InsufficientDataError(
            f"need at least {2 * period} rows to resample with period {period}"
        )
    t_coarse = t_raw // period
    blocks = raw[: t_coarse * period].reshape(t_coarse, period, raw.shape[1])
    coarse = blocks.mean(axis=1)
    if season_length > 1:
        if t_coarse < 2 * season_length:
            raise InsufficientDataError(
                "series too short to estimate the seasonal cycle"
            )
        for phase in range(season_length):
            idx = np.arange(phase, t_coarse, season_length)
            coarse[idx] -= coarse[idx].mean(axis=0)
    coarse -= coarse.mean(axis=0)
    return TimeSeriesDataset(values=coarse, names=list(names), kinds=list(kinds))


def _window_start(tau_max: int) -> int:
    # Shifted source-parent conditions reach back up to 2 * tau_max, so every
    # regression uses rows t in [2 * tau_max, T) for an identical sample count.
    return 2 * tau_max


def _lagged(values: np.ndarray, var: int, lag: int, t0: int) -> np.ndarray:
    return values[t0 - lag : values.shape[0] - lag, var]


def _condition_matrix(values, nodes, t0) -> np.ndarray | None:
    if not nodes:
        return None
    return np.column_stack([_lagged(values, i, tau, t0) for i, tau in nodes])


def _safe_parcorr(x, y, z, n, k) -> tuple[float, float]:
    """Partial correlation tolerant of the corner cases discovery can hit.

    Residuals with no variance left mean the tested series is fully explained
    by the conditions, which reads as independence here; redundant (collinear)
    conditioning columns fall back to the ridge-stabilized solve.
    """
    try:
        r = partial_correlation(x, y, z, on_singular="ridge")
    except DegenerateSeriesError:
        return 0.0, 1.0
    return r, parcorr_pvalue(r, n, k)


def pc1_select_parents(
    data: TimeSeriesDataset,
    j: int,
    assumptions: LinkAssumptions,
    tau_max: int,
    alpha_pc: float = 0.2,
    p_max: int = 10,
) -> list[tuple[int, int]]:
    """Iterative condition selection for variable j.

    Starting from every admissible lagged candidate (lag >= 1), each round q
    tests every remaining candidate against the target conditioned on the q
    strongest other candidates (strength = smallest |partial correlation|
    seen so far) and drops those with p > alpha_pc. Rounds grow q until it
    exceeds the remaining set size or p_max. Survivors come back strongest
    first; ties break on (variable, lag) for determinism.
    """
    if tau_max < 1:
        raise ConfigError("tau_max must be >= 1")
    if not 0.0 < alpha_pc < 1.0:
        raise ConfigError("alpha_pc must lie in (0, 1)")
    values = data.values
    t0 = _window_start(tau_max)
    n = values.shape[0] - t0
    if n - 2 - p_max < 1:
        raise InsufficientDataError(
            f"effective sample {n} too short for conditioning sets of size {p_max}"
        )
    parents = assumptions.candidates(j, tau_min=1)
    if not parents:
        return []
    y = values[t0:, j]
    min_abs: dict[tuple[int, int], float] = {}
    q = 0
    while q <= min(p_max, len(parents) - 1):
        removed = set()
        ordered = list(parents)
        for cand in ordered:
            z_nodes = [p for p in ordered if p != cand][:q]
            x = _lagged(values, cand[0], cand[1], t0)
            r, p = _safe_parcorr(x, y, _condition_matrix(values, z_nodes, t0), n, q)
            min_abs[cand] = min(min_abs.get(cand, np.inf), abs(r))
            if p > alpha_pc:
                removed.add(cand)
        parents = [c for c in parents if c not in removed]
        parents.sort(key=lambda c: (-min_abs[c], c[0], c[1]))
        q += 1
    return parents


def mci_test(
    data: TimeSeriesDataset,
    link: tuple[int, int, int],
    parents_of_target: list[tuple[int, int]],
    parents_of_source: list[tuple[int, int]],
    tau_max: int,
    p_x: int = 10,
) -> CITestResult:
    """Momentary conditional-independence test of (source, lag) -> target.

    Conditions on the target's selected parents (excluding the tested link)
    and on the source's p_x strongest parents shifted by the tested lag.
    """
    source, lag, target = link
    values = data.values
    t0 = _window_start(tau_max)
    if lag > tau_max:
        raise ContractError(f"lag {lag} exceeds tau_max {tau_max}")
    n = values.shape[0] - t0
    z_nodes = [p for p in parents_of_target if p != (source, lag)]
    for k, ktau in parents_of_source[:p_x]:
        shifted = (k, lag + ktau)
        if shifted not in z_nodes and shifted != (source, lag):
            z_nodes.append(shifted)
    x = _lagged(values, source, lag, t0)
    y = values[t0:, target]
    r, p = _safe_parcorr(x, y, _condition_matrix(values, z_nodes, t0), n, len(z_nodes))
    return CITestResult(statistic=r, pvalue=p, dof=n - 2 - len(z_nodes))


def _bh_keep(pvalues: np.ndarray, alpha: float) -> np.ndarray:
    """Benjamini-Hochberg: boolean keep mask at false-discovery level alpha."""
    m = len(pvalues)
    order = np.argsort(pvalues, kind="stable")
    ranked = pvalues[order]
    below = ranked <= alpha * (np.arange(1, m + 1) / m)
    keep = np.zeros(m, dtype=bool)
    if np.any(below):
        cutoff = ranked[np.nonzero(below)[0][-1]]
        keep = pvalues <= cutoff
    return keep


def run_pcmci(
    data: TimeSeriesDataset,
    assumptions: LinkAssumptions,
    tau_max: int = 6,
    alpha: float = 0.05,
    alpha_pc: float = 0.2,
    p_max: int = 10,
    p_x: int = 10,
    correction: str = "none",
) -> CausalGraph:
    """Full discovery: condition selection, MCI tests, significance threshold.

    correction='none' retains links with p <= alpha directly;
    correction='fdr_bh' applies a Benjamini-Hochberg step at level alpha,
    which never retains anything plain thresholding would reject.
    """
    if correction not in ("none", "fdr_bh"):
        raise ConfigError(f"unknown correction {correction!r}")
    if not 0.0 < alpha <= 1.0:
        raise ConfigError("alpha must lie in (0, 1]")
    parents = {
        j: pc1_select_parents(data, j, assumptions, tau_max, alpha_pc, p_max)
        for j in range(data.n_vars)
    }
    tested: list[tuple[int, int, int]] = []
    stats_out: list[tuple[float, float]] = []
    for j in range(data.n_vars):
        for i, tau in assumptions.candidates(j):
            res = mci_test(
                data, (i, tau, j), parents[j], parents[i], tau_max=tau_max, p_x=p_x
            )
            tested.append((i, tau, j))
            stats_out.append((res.statistic, res.pvalue))
    pvals = np.array([p for _, p in stats_out])
    if correction == "fdr_bh":
        keep = _bh_keep(pvals, alpha)
    else:
        keep = pvals <= alpha
    links = [
        CausalLink(source=i, lag=tau, target=j, mci=r, pvalue=p)
        for (i, tau, j), (r, p), k in zip(tested, stats_out, keep)
        if k
    ]
    return CausalGraph(
        names=list(data.names),
        kinds=list(data.kinds),
        tau_max=tau_max,
        alpha=alpha,
        links=links,
    )
