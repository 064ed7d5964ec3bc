"""Structural-causal-model generator with known ground truth.

Drivers evolve as a linear VAR on a coarse (monthly) grid with seasonal
forcing; slow large-scale indices hold their value across the fine steps of
each coarse block while local weather picks up extra fine-scale noise. Fire
occurrence is a Bernoulli draw from a logistic score over lagged driver
values, with optional pairwise synergy terms and a bias calibrated to a
requested positive rate. The generator emits both the fine-resolution
dataset and the exact coarse-lag causal graph that produced it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CalibrationError,
    ConfigError,
    ContractError,
    InsufficientDataError,
    StabilityError,
)
from .models import Batch
from .pcmci import CausalGraph, CausalLink, LinkAssumptions, TimeSeriesDataset

__all__ = [
    "Variable",
    "LagCoeff",
    "LabelRule",
    "SCMSpec",
    "GeneratedData",
    "generate",
    "label_fire",
    "make_windows",
    "WindowSplits",
    "preset_spec",
    "PRESET_NAMES",
    "write_dataset",
    "load_dataset",
]

_BURN_IN = 200


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # 'local' | 'oci' (the target is implicit)
    noise_std: float = 1.0
    seasonal_amplitude: float = 0.0
    fine_noise_std: float = 0.0


@dataclass(frozen=True)
class LagCoeff:
    """Linear dependence target_t += weight * source_{t - lag} (coarse lags)."""

    source: str
    lag: int
    target: str
    weight: float


@dataclass(frozen=True)
class LabelRule:
    """Logistic fire model over driver values ``response_lag`` fine steps back.

    score = sum_i weights[i] * x_i + sum_ij synergy[(i, j)] * x_i * x_j + bias.
    With bias None the intercept is calibrated by bisection so the expected
    positive rate matches positive_rate.
    """

    weights: dict[str, float]
    synergy: dict[tuple[str, str], float] = field(default_factory=dict)
    positive_rate: float = 0.05
    bias: float | None = None
    response_lag: int = 5


@dataclass(frozen=True)
class SCMSpec:
    variables: tuple[Variable, ...]
    coefficients: tuple[LagCoeff, ...]
    label: LabelRule
    target_name: str = "fire"
    stride: int = 4  # fine steps per coarse step
    season_length: int = 12  # coarse steps per seasonal cycle

    def __post_init__(self) -> None:
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate variable names in spec")
        if self.target_name in names:
            raise ConfigError("the target is generated by the label rule, not listed")
        for v in self.variables:
            if v.kind not in ("local", "oci"):
                raise ConfigError(f"driver kind must be local or oci, got {v.kind!r}")
        for c in self.coefficients:
            if c.lag < 1:
                raise ConfigError("cross-time coefficients need lag >= 1")
            if c.source not in names or c.target not in names:
                raise ConfigError(f"coefficient references unknown variable: {c}")
        referenced = set(self.label.weights) | {
            n for pair in self.label.synergy for n in pair
        }
        unknown = referenced - set(names)
        if unknown:
            raise ConfigError(f"label rule references unknown variables: {unknown}")
        if self.stride < 1 or self.season_length < 1:
            raise ConfigError("stride and season_length must be >= 1")
        if self.label.response_lag < 1:
            raise ConfigError("label response lag must be >= 1")

    @property
    def driver_names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def max_lag(self) -> int:
        return max((c.lag for c in self.coefficients), default=1)

    def spec_hash(self) -> str:
        blob = json.dumps(_spec_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _spec_to_dict(spec: SCMSpec) -> dict:
    return {
        "variables": [
            {
                "name": v.name,
                "kind": v.kind,
                "noise_std": v.noise_std,
                "seasonal_amplitude": v.seasonal_amplitude,
                "fine_noise_std": v.fine_noise_std,
            }
            for v in spec.variables
        ],
        "coefficients": [
            {"source": c.source, "lag": c.lag, "target": c.target, "weight": c.weight}
            for c in spec.coefficients
        ],
        "label": {
            "weights": dict(spec.label.weights),
            "synergy": {f"{a}|{b}": w for (a, b), w in spec.label.synergy.items()},
            "positive_rate": spec.label.positive_rate,
            "bias": spec.label.bias,
            "response_lag": spec.label.response_lag,
        },
        "target_name": spec.target_name,
        "stride": spec.stride,
        "season_length": spec.season_length,
    }


def _spec_from_dict(d: dict) -> SCMSpec:
    label = d["label"]
    return SCMSpec(
        variables=tuple(Variable(**v) for v in d["variables"]),
        coefficients=tuple(LagCoeff(**c) for c in d["coefficients"]),
        label=LabelRule(
            weights=dict(label["weights"]),
            synergy={tuple(k.split("|")): w for k, w in label["synergy"].items()},
            positive_rate=label["positive_rate"],
            bias=label["bias"],
            response_lag=label["response_lag"],
        ),
        target_name=d["target_name"],
        stride=d["stride"],
        season_length=d["season_length"],
    )


def companion_spectral_radius(spec: SCMSpec) -> float:
    """Spectral radius of the stacked one-step transition matrix."""
    names = spec.driver_names
    n = len(names)
    p = spec.max_lag
    index = {name: i for i, name in enumerate(names)}
    blocks = np.zeros((p, n, n))
    for c in spec.coefficients:
        blocks[c.lag - 1, index[c.target], index[c.source]] = c.weight
    companion = np.zeros((n * p, n * p))
    for lag in range(p):
        companion[:n, lag * n : (lag + 1) * n] = blocks[lag]
    if p > 1:
        companion[n:, : n * (p - 1)] = np.eye(n * (p - 1))
    return float(np.max(np.abs(np.linalg.eigvals(companion))))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ez = np.exp(x[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _simulate_coarse(spec: SCMSpec, t_coarse: int, noise: np.ndarray) -> np.ndarray:
    """Run the VAR with seasonal forcing; noise is (t_coarse + burn_in, C)."""
    names = spec.driver_names
    index = {name: i for i, name in enumerate(names)}
    total = t_coarse + _BURN_IN
    values = np.zeros((total, len(names)))
    season = np.zeros((total, len(names)))
    phases = 2.0 * np.pi * np.arange(len(names)) / max(len(names), 1)
    t_axis = np.arange(total)
    for i, v in enumerate(spec.variables):
        season[:, i] = v.seasonal_amplitude * np.sin(
            2.0 * np.pi * t_axis / spec.season_length + phases[i]
        )
        noise[:, i] *= v.noise_std
    for t in range(total):
        x_t = noise[t].copy()
        for c in spec.coefficients:
            if t - c.lag >= 0:
                x_t[index[c.target]] += c.weight * values[t - c.lag, index[c.source]]
        values[t] = x_t + season[t]
    return values[_BURN_IN:]


def _fine_from_coarse(spec: SCMSpec, coarse: np.ndarray, t_fine: int, fine_noise: np.ndarray) -> np.ndarray:
    fine = np.repeat(coarse, spec.stride, axis=0)[:t_fine]
    for i, v in enumerate(spec.variables):
        if v.fine_noise_std > 0:
            fine[:, i] += v.fine_noise_std * fine_noise[:t_fine, i]
    return fine


def _label_scores(spec: SCMSpec, fine: np.ndarray) -> np.ndarray:
    """Raw (bias-free) logistic scores; score[t] feeds the label at t."""
    names = spec.driver_names
    index = {name: i for i, name in enumerate(names)}
    g = spec.label.response_lag
    t_fine = fine.shape[0]
    scores = np.full(t_fine, -np.inf)
    lagged = fine[: t_fine - g]
    base = np.zeros(t_fine - g)
    for name, w in spec.label.weights.items():
        base += w * lagged[:, index[name]]
    for (a, b), s in spec.label.synergy.items():
        base += s * lagged[:, index[a]] * lagged[:, index[b]]
    scores[g:] = base
    return scores


def _calibrate_bias(scores: np.ndarray, target_rate: float) -> float:
    """Bisection on the intercept so the mean sigmoid matches target_rate."""
    valid = scores[np.isfinite(scores)]
    if valid.size == 0:
        raise CalibrationError("no valid time steps for label calibration")
    if not 0.0 < target_rate < 1.0:
        raise CalibrationError("target positive rate must lie in (0, 1)")
    lo, hi = -80.0, 80.0
    if _sigmoid(valid + lo).mean() > target_rate or _sigmoid(valid + hi).mean() < target_rate:
        raise CalibrationError(f"positive rate {target_rate} unreachable")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _sigmoid(valid + mid).mean() < target_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def label_fire(
    dataset: TimeSeriesDataset, spec: SCMSpec, rng: np.random.Generator
) -> np.ndarray:
    """Draw {0,1} fire labels for each fine step of a driver dataset.

    Steps earlier than the response lag have no defined score and get 0.
    """
    cols = [dataset.names.index(n) for n in spec.driver_names]
    fine = dataset.values[:, cols]
    scores = _label_scores(spec, fine)
    bias = spec.label.bias
    if bias is None:
        bias = _calibrate_bias(scores, spec.label.positive_rate)
    probs = np.zeros_like(scores)
    valid = np.isfinite(scores)
    probs[valid] = _sigmoid(scores[valid] + bias)
    return (rng.random(scores.shape[0]) < probs).astype(np.int64)


@dataclass
class GeneratedData:
    dataset: TimeSeriesDataset  # fine cadence, target column included
    labels: np.ndarray
    graph: CausalGraph  # ground truth at coarse lags
    spec: SCMSpec
    realized_rate: float


def _ground_truth_graph(spec: SCMSpec, alpha: float = 0.0) -> CausalGraph:
    names = spec.driver_names + [spec.target_name]
    kinds = [v.kind for v in spec.variables] + ["target"]
    index = {n: i for i, n in enumerate(names)}
    tau_max = spec.max_lag
    links = [
        CausalLink(
            source=index[c.source],
            lag=c.lag,
            target=index[c.target],
            mci=float(np.clip(c.weight, -1.0, 1.0)),
            pvalue=0.0,
        )
        for c in spec.coefficients
    ]
    fire_lag = max(1, round(spec.label.response_lag / spec.stride))
    tau_max = max(tau_max, fire_lag)
    fire_drivers = set(spec.label.weights) | {n for pair in spec.label.synergy for n in pair}
    for name in sorted(fire_drivers):
        strength = spec.label.weights.get(name, 0.0)
        if strength == 0.0:
            strength = 0.5  # synergy-only driver: direction-free strength marker
        links.append(
            CausalLink(
                source=index[name],
                lag=fire_lag,
                target=index[spec.target_name],
                mci=float(np.clip(strength, -1.0, 1.0)),
                pvalue=0.0,
            )
        )
    return CausalGraph(names=names, kinds=kinds, tau_max=tau_max, alpha=alpha, links=links)


def generate(spec: SCMSpec, t_fine: int, rng: np.random.Generator) -> GeneratedData:
    """Simulate the SCM for ``t_fine`` fine steps with a fresh burn-in."""
    if t_fine < 10 * spec.max_lag * spec.stride:
        raise InsufficientDataError(
            f"need at least {10 * spec.max_lag * spec.stride} fine steps"
        )
    radius = companion_spectral_radius(spec)
    if radius >= 1.0:
        raise StabilityError(f"VAR companion spectral radius {radius:.3f} >= 1")
    t_coarse = -(-t_fine // spec.stride)  # ceil
    coarse_noise = rng.normal(size=(t_coarse + _BURN_IN, len(spec.variables)))
    fine_noise = rng.normal(size=(t_fine, len(spec.variables)))
    coarse = _simulate_coarse(spec, t_coarse, coarse_noise)
    fine = _fine_from_coarse(spec, coarse, t_fine, fine_noise)
    kinds = [v.kind for v in spec.variables]
    driver_ds = TimeSeriesDataset(
        values=np.column_stack([fine, np.zeros(t_fine)]),
        names=spec.driver_names + [spec.target_name],
        kinds=kinds + ["target"],
    )
    labels = label_fire(driver_ds, spec, rng)
    values = np.column_stack([fine, labels.astype(np.float64)])
    dataset = TimeSeriesDataset(
        values=values,
        names=spec.driver_names + [spec.target_name],
        kinds=kinds + ["target"],
    )
    graph = _ground_truth_graph(spec)
    return GeneratedData(
        dataset=dataset,
        labels=labels,
        graph=graph,
        spec=spec,
        realized_rate=float(labels.mean()),
    )


@dataclass
class WindowSplits:
    """Chronological train/validation/test windows with no boundary crossings."""

    train: Batch
    val: Batch
    test: Batch
    train_times: np.ndarray  # input-end time t of each train window
    val_times: np.ndarray
    test_times: np.ndarray
    local_names: list[str]
    oci_names: list[str]
    standardizer: dict | None = None


def window_count(t_fine: int, l_local: int, l_oci: int, stride: int, horizon: int) -> int:
    """Number of valid windows: T - max(L_local, stride * L_oci) - h + 1."""
    return t_fine - max(l_local, stride * l_oci) - horizon + 1


def make_windows(
    dataset: TimeSeriesDataset,
    labels: np.ndarray,
    l_local: int,
    l_oci: int,
    horizon: int,
    stride: int,
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15),
    standardize: bool = True,
) -> WindowSplits:
    """Cut lag windows and split them chronologically (train earliest).

    The local window covers the last ``l_local`` fine steps up to and
    including t; the slow-index window samples ``l_oci`` values one per
    coarse block, ending at the start of the block containing t. Labels sit
    at t + horizon. Windows whose input or label range would cross a split
    boundary are dropped, so no label of one split falls inside another
    split's input range.
    """
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    if abs(sum(split_fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must sum to 1")
    t_fine = dataset.n_steps
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != t_fine:
        raise ContractError("labels must align with the dataset rows")
    local_idx = dataset.indices_of_kind("local")
    oci_idx = dataset.indices_of_kind("oci")
    local_names = [dataset.names[i] for i in local_idx]
    oci_names = [dataset.names[i] for i in oci_idx]
    reach = max(l_local, stride * l_oci)
    n_windows = window_count(t_fine, l_local, l_oci, stride, horizon)
    if n_windows < 3:
        raise InsufficientDataError("series too short for the requested windows")
    t_first = reach - 1
    times = np.arange(t_first, t_first + n_windows)

    values = dataset.values
    mean = np.zeros(values.shape[1])
    std = np.ones(values.shape[1])
    boundary1 = int(np.floor(t_fine * split_fractions[0]))
    boundary2 = int(np.floor(t_fine * (split_fractions[0] + split_fractions[1])))
    if standardize:
        train_rows = values[:boundary1]
        mean = train_rows.mean(axis=0)
        std = train_rows.std(axis=0)
        std[std == 0] = 1.0
        # never rescale the target column
        ti = dataset.target_index
        mean[ti], std[ti] = 0.0, 1.0
    scaled = (values - mean) / std

    x_local = np.empty((n_windows, len(local_idx), l_local))
    x_oci = np.empty((n_windows, len(oci_idx), l_oci))
    for w, t in enumerate(times):
        for c, col in enumerate(local_idx):
            x_local[w, c] = scaled[t - l_local + 1 : t + 1, col]
        for c, col in enumerate(oci_idx):
            oci_t = t - (stride - 1) - stride * np.arange(l_oci - 1, -1, -1)
            x_oci[w, c] = scaled[oci_t, col]
    y = labels[times + horizon]

    input_start = times - reach + 1
    label_time = times + horizon
    in_train = label_time < boundary1
    in_val = (input_start >= boundary1) & (label_time < boundary2)
    in_test = input_start >= boundary2

    def _batch(mask: np.ndarray) -> Batch:
        return Batch(
            x_local=x_local[mask], x_oci=x_oci[mask], y=y[mask], horizon=horizon
        )

    for name, mask in (("train", in_train), ("validation", in_val), ("test", in_test)):
        if mask.sum() < 1:
            raise InsufficientDataError(f"{name} split received no windows")
    return WindowSplits(
        train=_batch(in_train),
        val=_batch(in_val),
        test=_batch(in_test),
        train_times=times[in_train],
        val_times=times[in_val],
        test_times=times[in_test],
        local_names=local_names,
        oci_names=oci_names,
        standardizer={"mean": mean.tolist(), "std": std.tolist()} if standardize else None,
    )


def _fig6_structure(
    positive_rate: float,
    distractors: bool = False,
    seasonal: float = 0.6,
) -> SCMSpec:
    """Seven-node spec: three slow indices drive three weather mediators,
    weather drives fire one coarse step later (response lag just over one
    block). With ``distractors`` two channels carry no causal role."""
    variables = (
        Variable("oci_a", "oci", noise_std=1.0, seasonal_amplitude=seasonal),
        Variable("oci_b", "oci", noise_std=1.0, seasonal_amplitude=0.4 * seasonal),
        Variable("oci_c", "oci", noise_std=1.0, seasonal_amplitude=0.0),
        Variable("temp", "local", noise_std=0.8, seasonal_amplitude=seasonal, fine_noise_std=0.25),
        Variable("precip", "local", noise_std=0.8, seasonal_amplitude=0.5 * seasonal, fine_noise_std=0.25),
        Variable("dryness", "local", noise_std=0.8, seasonal_amplitude=0.0, fine_noise_std=0.25),
    )
    if distractors:
        # exchangeable channel marginals: the only asymmetry is which slow
        # index drives which mediator, so channel identity is carried by the
        # causal links alone and fire needs the temp-with-its-driver synergy
        variables = (
            Variable("oci_a", "oci", noise_std=1.0),
            Variable("oci_b", "oci", noise_std=1.0),
            Variable("oci_c", "oci", noise_std=1.0),
            Variable("temp", "local", noise_std=0.8, fine_noise_std=0.4),
            Variable("precip", "local", noise_std=0.8, fine_noise_std=0.4),
            Variable("dryness", "local", noise_std=0.8, fine_noise_std=0.4),
        )
        coefficients = (
            LagCoeff("oci_a", 1, "oci_a", 0.65),
            LagCoeff("oci_b", 1, "oci_b", 0.65),
            LagCoeff("oci_c", 1, "oci_c", 0.65),
            LagCoeff("temp", 1, "temp", 0.45),
            LagCoeff("precip", 1, "precip", 0.45),
            LagCoeff("dryness", 1, "dryness", 0.45),
            LagCoeff("oci_a", 2, "temp", 0.55),
            LagCoeff("oci_b", 1, "dryness", 0.55),
            LagCoeff("oci_a", 3, "dryness", 0.35),
            LagCoeff("oci_b", 1, "temp", 0.35),
        )
        label = LabelRule(
            weights={"temp": 2.0, "dryness": 2.0},
            synergy={("temp", "dryness"): 2.5},
            positive_rate=positive_rate,
            response_lag=4,
        )
    else:
        coefficients = (
            LagCoeff("oci_a", 1, "oci_a", 0.70),
            LagCoeff("oci_b", 1, "oci_b", 0.60),
            LagCoeff("oci_c", 1, "oci_c", 0.65),
            LagCoeff("temp", 1, "temp", 0.45),
            LagCoeff("precip", 1, "precip", 0.40),
            LagCoeff("dryness", 1, "dryness", 0.45),
            LagCoeff("oci_a", 2, "temp", 0.55),
            LagCoeff("oci_b", 1, "precip", -0.50),
            LagCoeff("oci_c", 3, "dryness", 0.50),
            LagCoeff("temp", 1, "dryness", 0.40),
        )
        label = LabelRule(
            weights={"temp": 1.8, "dryness": 1.5, "precip": -1.8},
            synergy={("temp", "dryness"): 0.8},
            positive_rate=positive_rate,
            response_lag=4,
        )
    return SCMSpec(variables=variables, coefficients=coefficients, label=label)


PRESET_NAMES = ("fig6-default", "mediterranean", "boreal")


def preset_spec(name: str) -> SCMSpec:
    """Canonical generator specs; the imbalance presets mirror the reported
    positive fractions of the two study regions."""
    if name == "fig6-default":
        return _fig6_structure(positive_rate=0.15)
    if name == "mediterranean":
        return _fig6_structure(positive_rate=0.011)
    if name == "boreal":
        return _fig6_structure(positive_rate=0.000737, distractors=True)
    raise ConfigError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")


def mediator_assumptions(spec_or_dataset, tau_max: int) -> LinkAssumptions:
    """Assumption set for a generated dataset under the mediator ordering."""
    kinds = (
        spec_or_dataset.kinds
        if isinstance(spec_or_dataset, TimeSeriesDataset)
        else [v.kind for v in spec_or_dataset.variables] + ["target"]
    )
    return LinkAssumptions.mediator_ordering(list(kinds), tau_max)


def write_dataset(out_dir: Path, generated: GeneratedData, seed: int) -> None:
    """CSV (wide, one row per fine step) plus a JSON sidecar."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = generated.dataset
    lines = [",".join(ds.names)]
    for t in range(ds.n_steps):
        lines.append(",".join(repr(float(v)) for v in ds.values[t]))
    (out_dir / "data.csv").write_text("\n".join(lines) + "\n")
    sidecar = {
        "names": ds.names,
        "kinds": ds.kinds,
        "stride": generated.spec.stride,
        "season_length": generated.spec.season_length,
        "seed": seed,
        "spec": _spec_to_dict(generated.spec),
        "spec_hash": generated.spec.spec_hash(),
        "positive_rate_requested": generated.spec.label.positive_rate,
        "positive_rate_realized": generated.realized_rate,
        "ground_truth_graph": generated.graph.to_dict(),
    }
    (out_dir / "meta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_dataset(out_dir: Path) -> GeneratedData:
    from .errors import DataError

    out_dir = Path(out_dir)
    if not (out_dir / "meta.json").exists() or not (out_dir / "data.csv").exists():
        raise DataError(f"no dataset found in {out_dir}")
    meta = json.loads((out_dir / "meta.json").read_text())
    rows = (out_dir / "data.csv").read_text().strip().split("\n")
    names = rows[0].split(",")
    values = np.array([[float(x) for x in line.split(",")] for line in rows[1:]])
    dataset = TimeSeriesDataset(values=values, names=names, kinds=meta["kinds"])
    spec = _spec_from_dict(meta["spec"])
    labels = values[:, dataset.target_index].astype(np.int64)
    return GeneratedData(
        dataset=dataset,
        labels=labels,
        graph=CausalGraph.from_dict(meta["ground_truth_graph"]),
        spec=spec,
        realized_rate=float(meta["positive_rate_realized"]),
    )
