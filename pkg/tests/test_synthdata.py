"""Generator tests: dynamics, label calibration, windows, leakage guards."""

import numpy as np
import pytest

from causalfire import seeding, synthdata
from causalfire.errors import (
    CalibrationError,
    ConfigError,
    ContractError,
    InsufficientDataError,
    StabilityError,
)
from causalfire.synthdata import (
    LabelRule,
    LagCoeff,
    SCMSpec,
    Variable,
    companion_spectral_radius,
    generate,
    label_fire,
    make_windows,
    preset_spec,
    window_count,
)


def _ar_spec(coeff=0.9, rate=0.1):
    return SCMSpec(
        variables=(
            Variable("slow", "oci", noise_std=1.0),
            Variable("temp", "local", noise_std=1.0),
        ),
        coefficients=(LagCoeff("slow", 1, "slow", coeff),),
        label=LabelRule(weights={"temp": 1.0}, positive_rate=rate, response_lag=4),
    )


class TestSpec:
    def test_stability_check(self):
        assert companion_spectral_radius(_ar_spec(0.9)) == pytest.approx(0.9, abs=1e-9)
        with pytest.raises(StabilityError):
            generate(_ar_spec(1.05), 2000, seeding.stream(0, "gen"))

    def test_unknown_references_rejected(self):
        with pytest.raises(ConfigError):
            SCMSpec(
                variables=(Variable("a", "local"),),
                coefficients=(LagCoeff("a", 1, "ghost", 0.5),),
                label=LabelRule(weights={"a": 1.0}),
            )
        with pytest.raises(ConfigError):
            SCMSpec(
                variables=(Variable("a", "local"),),
                coefficients=(),
                label=LabelRule(weights={"ghost": 1.0}),
            )

    def test_contemporaneous_coefficient_rejected(self):
        with pytest.raises(ConfigError):
            SCMSpec(
                variables=(Variable("a", "local"), Variable("b", "local")),
                coefficients=(LagCoeff("a", 0, "b", 0.5),),
                label=LabelRule(weights={"a": 1.0}),
            )

    def test_presets_are_stable_and_mediator_compliant(self):
        for name in synthdata.PRESET_NAMES:
            spec = preset_spec(name)
            assert companion_spectral_radius(spec) < 1.0
            gen = generate(spec, 2000, seeding.stream(0, f"preset-{name}"))
            truth = gen.graph
            la = synthdata.mediator_assumptions(gen.dataset, tau_max=truth.tau_max)
            for link in truth.links:
                assert la.permits(link.source, link.lag, link.target)


class TestGenerate:
    def test_ar1_autocorrelation(self):
        gen = generate(_ar_spec(0.9), 2000, seeding.stream(1, "ar"))
        coarse = gen.dataset.column("slow")[:: gen.spec.stride]
        r = np.corrcoef(coarse[:-1], coarse[1:])[0, 1]
        assert abs(r - 0.9) < 0.05

    def test_seed_reproducibility(self):
        a = generate(_ar_spec(), 2000, seeding.stream(7, "gen"))
        b = generate(_ar_spec(), 2000, seeding.stream(7, "gen"))
        assert np.array_equal(a.dataset.values, b.dataset.values)
        assert np.array_equal(a.labels, b.labels)

    def test_oci_holds_within_coarse_blocks(self):
        gen = generate(_ar_spec(), 2000, seeding.stream(2, "gen"))
        slow = gen.dataset.column("slow")
        blocks = slow[: (2000 // 4) * 4].reshape(-1, 4)
        assert np.all(blocks == blocks[:, :1])

    def test_requires_minimum_length(self):
        with pytest.raises(InsufficientDataError):
            generate(_ar_spec(), 30, seeding.stream(0, "gen"))

    def test_ground_truth_included(self):
        spec = preset_spec("fig6-default")
        gen = generate(spec, 2000, seeding.stream(3, "gen"))
        edges = gen.graph.edge_set()
        names = gen.graph.names
        assert (names.index("temp"), 1, names.index("fire")) in edges
        assert (names.index("oci_a"), 2, names.index("temp")) in edges


class TestLabelFire:
    def test_large_negative_bias_gives_all_zeros(self):
        spec = _ar_spec()
        gen = generate(spec, 2000, seeding.stream(4, "gen"))
        frozen = SCMSpec(
            variables=spec.variables,
            coefficients=spec.coefficients,
            label=LabelRule(weights={"temp": 1.0}, bias=-60.0, response_lag=4),
        )
        labels = label_fire(gen.dataset, frozen, seeding.stream(4, "labels"))
        assert labels.sum() == 0

    def test_calibrated_rate_within_ten_percent(self):
        spec = _ar_spec(rate=0.011)
        gen = generate(spec, 50000, seeding.stream(5, "gen"))
        assert 0.0099 <= gen.realized_rate <= 0.0121

    def test_unreachable_rate_raises(self):
        spec = _ar_spec()
        gen = generate(spec, 2000, seeding.stream(6, "gen"))
        bad = SCMSpec(
            variables=spec.variables,
            coefficients=spec.coefficients,
            label=LabelRule(weights={"temp": 1.0}, positive_rate=1.0, response_lag=4),
        )
        with pytest.raises(CalibrationError):
            label_fire(gen.dataset, bad, seeding.stream(6, "labels"))

    def test_synergy_concentrates_positives(self):
        spec = SCMSpec(
            variables=(Variable("a", "local"), Variable("b", "local")),
            coefficients=(),
            label=LabelRule(
                weights={},
                synergy={("a", "b"): 1.5},
                positive_rate=0.1,
                response_lag=4,
            ),
        )
        gen = generate(spec, 20000, seeding.stream(8, "gen"))
        a = gen.dataset.column("a")
        b = gen.dataset.column("b")
        product = (a * b)[: -spec.label.response_lag]
        y = gen.labels[spec.label.response_lag :]
        assert product[y == 1].mean() > product.mean()

    def test_labels_ignore_future_values(self):
        # fixed bias + fixed label draws: perturbing drivers after time s
        # cannot change labels at or before s + response lag - 1
        spec = _ar_spec()
        frozen = SCMSpec(
            variables=spec.variables,
            coefficients=spec.coefficients,
            label=LabelRule(weights={"temp": 2.0}, bias=-1.0, response_lag=4),
        )
        gen = generate(spec, 2000, seeding.stream(9, "gen"))
        s = 1500
        tampered = gen.dataset.values.copy()
        tampered[s:, :2] += 1000.0
        from causalfire.pcmci import TimeSeriesDataset

        ds2 = TimeSeriesDataset(
            values=tampered, names=gen.dataset.names, kinds=gen.dataset.kinds
        )
        l1 = label_fire(gen.dataset, frozen, seeding.stream(10, "labels"))
        l2 = label_fire(ds2, frozen, seeding.stream(10, "labels"))
        cut = s + frozen.label.response_lag
        assert np.array_equal(l1[:cut], l2[:cut])
        assert not np.array_equal(l1[cut:], l2[cut:])


class TestMakeWindows:
    def _generated(self, t=4000):
        spec = preset_spec("fig6-default")
        return generate(spec, t, seeding.stream(11, "gen"))

    def test_window_count_formula(self):
        gen = self._generated()
        l_local, l_oci, h = 16, 5, 2
        splits = make_windows(gen.dataset, gen.labels, l_local, l_oci, h, gen.spec.stride)
        expected = window_count(4000, l_local, l_oci, gen.spec.stride, h)
        assert expected == 4000 - max(l_local, 4 * l_oci) - h + 1
        total = splits.train.size + splits.val.size + splits.test.size
        assert total <= expected
        # only windows straddling the two boundaries are dropped
        assert total >= expected - 2 * (max(l_local, 4 * l_oci) + h + 1)

    def test_zero_horizon_rejected(self):
        gen = self._generated(2000)
        with pytest.raises(ContractError):
            make_windows(gen.dataset, gen.labels, 8, 4, 0, gen.spec.stride)

    def test_no_leakage_across_splits(self):
        gen = self._generated()
        l_local, l_oci, h = 12, 6, 3
        splits = make_windows(gen.dataset, gen.labels, l_local, l_oci, h, gen.spec.stride)
        reach = max(l_local, gen.spec.stride * l_oci)
        ranges = {}
        for name, times in (
            ("train", splits.train_times),
            ("val", splits.val_times),
            ("test", splits.test_times),
        ):
            inputs = set()
            labels_at = set()
            for t in times:
                inputs.update(range(t - reach + 1, t + 1))
                labels_at.add(t + h)
            ranges[name] = (inputs, labels_at)
        for a in ranges:
            for b in ranges:
                if a == b:
                    continue
                assert not (ranges[a][1] & ranges[b][0]), f"{a} labels inside {b} inputs"

    def test_chronological_order(self):
        gen = self._generated()
        splits = make_windows(gen.dataset, gen.labels, 12, 5, 1, gen.spec.stride)
        assert splits.train_times.max() < splits.val_times.min()
        assert splits.val_times.max() < splits.test_times.min()

    def test_standardization_uses_train_rows_only(self):
        gen = self._generated()
        splits = make_windows(gen.dataset, gen.labels, 12, 5, 1, gen.spec.stride)
        boundary = int(np.floor(gen.dataset.n_steps * 0.7))
        train_rows = gen.dataset.values[:boundary]
        ti = gen.dataset.target_index
        for col in range(gen.dataset.n_vars):
            if col == ti:
                continue
            assert splits.standardizer["mean"][col] == pytest.approx(
                train_rows[:, col].mean()
            )

    def test_labels_preserved_exactly(self):
        gen = self._generated()
        h = 2
        splits = make_windows(gen.dataset, gen.labels, 12, 5, h, gen.spec.stride)
        assert np.array_equal(splits.test.y, gen.labels[splits.test_times + h])


class TestRoundtrip:
    def test_write_and_load(self, tmp_path):
        gen = generate(preset_spec("fig6-default"), 2000, seeding.stream(12, "gen"))
        synthdata.write_dataset(tmp_path, gen, seed=12)
        back = synthdata.load_dataset(tmp_path)
        assert np.allclose(back.dataset.values, gen.dataset.values)
        assert back.dataset.names == gen.dataset.names
        assert back.graph.to_json() == gen.graph.to_json()
        assert back.spec == gen.spec

    def test_write_is_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            gen = generate(preset_spec("mediterranean"), 2000, seeding.stream(13, "gen"))
            synthdata.write_dataset(tmp_path / sub, gen, seed=13)
        assert (tmp_path / "a" / "data.csv").read_bytes() == (
            tmp_path / "b" / "data.csv"
        ).read_bytes()
        assert (tmp_path / "a" / "meta.json").read_bytes() == (
            tmp_path / "b" / "meta.json"
        ).read_bytes()
