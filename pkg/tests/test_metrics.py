import itertools

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from popsynth import metrics
from popsynth.data import MISSING, CategoricalSchema, Dataset
from popsynth.errors import SchemaError, UndefinedMetricError, ValidationError

SCHEMA = CategoricalSchema(
    (
        ("a", ("a0", "a1", "a2")),
        ("b", ("b0", "b1")),
        ("c", ("c0", "c1", "c2", "c3")),
    )
)


def ds(rows):
    return Dataset(SCHEMA, np.array(rows, dtype=np.int64))


def random_ds(n, seed, missing_rate=0.0):
    rng = np.random.default_rng(seed)
    rows = np.column_stack(
        [rng.integers(0, 3, n), rng.integers(0, 2, n), rng.integers(0, 4, n)]
    ).astype(np.int64)
    if missing_rate:
        rows[rng.random(rows.shape) < missing_rate] = MISSING
    return Dataset(SCHEMA, rows)


class TestMarginal:
    def test_even_split(self):
        m = metrics.marginal(ds([[0, 0, 0], [0, 1, 0], [1, 0, 0], [1, 1, 0]]), "a")
        assert m.probabilities == {"a0": 0.5, "a1": 0.5, "a2": 0.0}

    def test_single_category(self):
        m = metrics.marginal(ds([[2, 0, 0]] * 5), "a")
        assert m.probabilities["a2"] == 1.0

    def test_missing_excluded(self):
        m = metrics.marginal(ds([[0, 0, 0], [MISSING, 0, 0], [1, 0, 0]]), "a")
        assert m.probabilities == {"a0": 0.5, "a1": 0.5, "a2": 0.0}

    def test_matches_counting_oracle(self):
        d = random_ds(500, 0)
        m = metrics.marginal(d, "c")
        col = d.rows[:, 2]
        for k in range(4):
            assert m.probabilities[f"c{k}"] == (col == k).mean()

    def test_all_missing_column(self):
        with pytest.raises(UndefinedMetricError):
            metrics.marginal(ds([[MISSING, 0, 0]]), "a")


class TestAttributeScores:
    def test_identity_is_perfect(self):
        d = random_ds(200, 1)
        for attr in ("a", "b", "c"):
            assert metrics.category_coverage(d, d, attr) == 1.0
            assert metrics.tv_complement(d, d, attr) == 1.0
            assert metrics.category_adherence(d, d, attr) == 1.0

    def test_coverage_three_of_four(self):
        gt = ds([[0, 0, k] for k in range(4)])
        syn = ds([[0, 0, k] for k in range(3)])
        assert metrics.category_coverage(gt, syn, "c") == 0.75

    def test_tv_half_half_vs_three_seven(self):
        gt = ds([[0, 0, 0]] * 5 + [[0, 1, 0]] * 5)
        syn = ds([[0, 0, 0]] * 3 + [[0, 1, 0]] * 7)
        assert abs(metrics.tv_complement(gt, syn, "b") - 0.8) < 1e-12

    def test_tv_disjoint_supports(self):
        gt = ds([[0, 0, 0]])
        syn = ds([[1, 0, 0]])
        assert metrics.tv_complement(gt, syn, "a") == 0.0

    def test_tv_symmetric(self):
        gt, syn = random_ds(300, 2), random_ds(300, 3)
        for attr in SCHEMA.names:
            assert metrics.tv_complement(gt, syn, attr) == pytest.approx(
                metrics.tv_complement(syn, gt, attr), abs=1e-15
            )

    def test_adherence_eight_of_ten(self):
        gt = ds([[0, 0, k] for k in (0, 1)])  # categories c2, c3 never observed
        syn = ds([[0, 0, k] for k in [0, 1, 0, 1, 0, 1, 0, 1, 2, 3]])
        assert metrics.category_adherence(gt, syn, "c") == 0.8

    def test_schema_mismatch(self):
        other = Dataset(
            CategoricalSchema((("a", ("x", "y")),)), np.zeros((1, 1), dtype=np.int64)
        )
        with pytest.raises(SchemaError):
            metrics.tv_complement(random_ds(5, 4), other, "a")

    def test_row_permutation_invariance(self):
        d1 = random_ds(200, 5)
        perm = np.random.default_rng(6).permutation(200)
        d2 = Dataset(SCHEMA, d1.rows[perm])
        syn = random_ds(200, 7)
        for attr in SCHEMA.names:
            assert metrics.tv_complement(d1, syn, attr) == metrics.tv_complement(
                d2, syn, attr
            )


class TestJointTable:
    def test_k1_equals_marginal(self):
        d = random_ds(300, 8)
        jt = metrics.joint_table(d, ["b"])
        m = metrics.marginal(d, "b")
        assert jt.n_cells == 2
        for k in range(2):
            assert jt.probabilities.get((k,), 0.0) == m.probabilities[f"b{k}"]

    def test_n_cells_is_category_product(self):
        jt = metrics.joint_table(random_ds(50, 9), ["a", "b", "c"])
        assert jt.n_cells == 3 * 2 * 4

    def test_matches_enumeration_oracle(self):
        d = random_ds(400, 10)
        jt = metrics.joint_table(d, ["a", "c"])
        for combo in itertools.product(range(3), range(4)):
            want = ((d.rows[:, 0] == combo[0]) & (d.rows[:, 2] == combo[1])).mean()
            assert jt.probabilities.get(combo, 0.0) == pytest.approx(want, abs=1e-15)

    def test_missing_rows_dropped_per_subset(self):
        rows = [[0, 0, 0], [MISSING, 0, 1], [1, 1, 2]]
        jt = metrics.joint_table(ds(rows), ["b", "c"])  # no MISSING in b or c
        assert sum(jt.probabilities.values()) == pytest.approx(1.0)
        assert len(jt.probabilities) == 3

    def test_all_rows_excluded(self):
        with pytest.raises(UndefinedMetricError):
            metrics.joint_table(ds([[MISSING, 0, 0]]), ["a"])


def dense(jt):
    arr = np.zeros(jt.n_cells)
    sizes = [len(SCHEMA.categories(a)) for a in jt.attributes]
    for combo, p in jt.probabilities.items():
        arr[np.ravel_multi_index(combo, sizes)] = p
    return arr


class TestSrmseAndRSquared:
    def test_identical_tables(self):
        jt = metrics.joint_table(random_ds(100, 11), ["a", "b"])
        assert metrics.srmse(jt, jt) == 0.0
        assert metrics.r_squared(jt, jt) == 1.0

    def test_opposite_point_masses(self):
        gt = metrics.JointTable(("b",), {(0,): 1.0}, 2)
        syn = metrics.JointTable(("b",), {(1,): 1.0}, 2)
        assert metrics.srmse(gt, syn) == pytest.approx(2.0, abs=1e-15)

    def test_uniform_synthetic_gives_r_squared_zero(self):
        gt = metrics.joint_table(random_ds(300, 12), ["a", "b"])
        uniform = metrics.JointTable(
            ("a", "b"), {c: 1 / 6 for c in itertools.product(range(3), range(2))}, 6
        )
        assert metrics.r_squared(gt, uniform) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_oracle(self, seed):
        gt = metrics.joint_table(random_ds(200, seed), ["a", "b", "c"])
        syn = metrics.joint_table(random_ds(150, seed + 100), ["a", "b", "c"])
        g, s = dense(gt), dense(syn)
        n_b = gt.n_cells
        rmse = np.sqrt(((g - s) ** 2).mean())
        assert metrics.srmse(gt, syn) == pytest.approx(rmse * n_b, abs=1e-12)
        pi_bar = 1.0 / n_b
        want_r2 = 1.0 - ((g - s) ** 2).sum() / ((g - pi_bar) ** 2).sum()
        assert metrics.r_squared(gt, syn) == pytest.approx(want_r2, abs=1e-12)

    def test_uniform_ground_truth_undefined(self):
        uniform = metrics.JointTable(("b",), {(0,): 0.5, (1,): 0.5}, 2)
        with pytest.raises(UndefinedMetricError):
            metrics.r_squared(uniform, uniform)

    def test_subset_mismatch(self):
        a = metrics.joint_table(random_ds(50, 13), ["a"])
        b = metrics.joint_table(random_ds(50, 13), ["b"])
        with pytest.raises(ValidationError):
            metrics.srmse(a, b)

    def test_k1_srmse_equals_marginal_rmse(self):
        gt_d, syn_d = random_ds(400, 14), random_ds(400, 15)
        jt_g = metrics.joint_table(gt_d, ["c"])
        jt_s = metrics.joint_table(syn_d, ["c"])
        mg = metrics.marginal(gt_d, "c").probabilities
        ms = metrics.marginal(syn_d, "c").probabilities
        rmse = np.sqrt(np.mean([(mg[k] - ms[k]) ** 2 for k in mg]))
        assert metrics.srmse(jt_g, jt_s) == pytest.approx(rmse * 4, abs=1e-12)


def combos_to_ds(combos):
    """Datasets over the (a, b) attributes from explicit combination lists."""
    rows = [[a, b, 0] for a, b in combos]
    return ds(rows if rows else np.zeros((0, 3), dtype=np.int64))


class TestTaxonomy:
    def test_identity_all_general(self):
        d = random_ds(100, 16)
        t = metrics.classify_taxonomy(d, d, d, ["a", "b"])
        assert t.sampling_zeros == set()
        assert t.structural_zeros == set()
        assert t.missing_samples == set()
        assert t.general_samples == metrics._combo_set(d, ("a", "b"))

    def test_removed_from_train_is_sampling_zero(self):
        gt = combos_to_ds([(0, 0), (1, 1)])
        train = combos_to_ds([(0, 0)])
        gen = combos_to_ds([(0, 0), (1, 1)])
        t = metrics.classify_taxonomy(gt, train, gen, ["a", "b"])
        assert t.general_samples == {(0, 0)}
        assert t.sampling_zeros == {(1, 1)}

    combo_sets = st.sets(
        st.tuples(st.integers(0, 2), st.integers(0, 1)), min_size=1, max_size=6
    )

    @settings(max_examples=200, deadline=None)
    @given(gt=combo_sets, train=combo_sets, gen=combo_sets)
    def test_set_algebra_oracle(self, gt, train, gen):
        t = metrics.classify_taxonomy(
            combos_to_ds(sorted(gt)), combos_to_ds(sorted(train)),
            combos_to_ds(sorted(gen)), ["a", "b"],
        )
        assert t.general_samples == gen & gt & train
        assert t.sampling_zeros == (gen & gt) - train
        assert t.structural_zeros == gen - gt
        assert t.missing_samples == train - gen
        # the three generated classes partition the generated combos
        assert (t.general_samples | t.sampling_zeros | t.structural_zeros) == gen
        assert not t.general_samples & t.sampling_zeros
        assert not t.general_samples & t.structural_zeros
        assert not t.sampling_zeros & t.structural_zeros

    def test_generated_row_counts(self):
        gt = combos_to_ds([(0, 0), (1, 1)])
        train = combos_to_ds([(0, 0)])
        gen = combos_to_ds([(0, 0), (0, 0), (1, 1), (2, 0)])
        t = metrics.classify_taxonomy(gt, train, gen, ["a", "b"])
        assert t.generated_row_counts == {
            "general": 2, "sampling_zero": 1, "structural_zero": 1,
        }


class TestZeroScores:
    def test_full_coverage(self):
        gt = combos_to_ds([(0, 0), (1, 0), (1, 1)])
        train = combos_to_ds([(0, 0), (1, 0)])
        gen = combos_to_ds([(0, 0), (1, 0), (1, 1)])
        t = metrics.classify_taxonomy(gt, train, gen, ["a", "b"])
        gs, sz, stz = metrics.zero_scores(t, gt, train, gen, ["a", "b"])
        assert (gs, sz, stz) == (1.0, 1.0, 0.0)

    def test_hand_worked_ratios(self):
        gt = combos_to_ds([(0, 0), (0, 1), (1, 0), (1, 1)])
        train = combos_to_ds([(0, 0), (0, 1)])
        gen = combos_to_ds([(0, 0), (1, 0), (2, 1)])  # (2,1) outside gt
        t = metrics.classify_taxonomy(gt, train, gen, ["a", "b"])
        gs, sz, stz = metrics.zero_scores(t, gt, train, gen, ["a", "b"])
        assert gs == pytest.approx(1 / 2)  # general {(0,0)} over gt∩train (2)
        assert sz == pytest.approx(1 / 2)  # sampling {(1,0)} over gt\train (2)
        assert stz == pytest.approx(1 / 3)  # structural {(2,1)} over 3 generated

    def test_zero_denominator(self):
        gt = combos_to_ds([(0, 0)])
        train = combos_to_ds([(0, 0)])  # gt \ train is empty
        gen = combos_to_ds([(0, 0)])
        t = metrics.classify_taxonomy(gt, train, gen, ["a", "b"])
        with pytest.raises(UndefinedMetricError):
            metrics.zero_scores(t, gt, train, gen, ["a", "b"])


class TestPrecisionRecall:
    def test_equal_supports(self):
        jt = metrics.joint_table(random_ds(100, 17), ["a", "b"])
        assert metrics.precision_recall(jt, jt) == (1.0, 1.0)

    def test_disjoint_supports(self):
        gt = metrics.JointTable(("b",), {(0,): 1.0}, 2)
        gen = metrics.JointTable(("b",), {(1,): 1.0}, 2)
        assert metrics.precision_recall(gt, gen) == (0.0, 0.0)

    @settings(max_examples=100, deadline=None)
    @given(
        gt=TestTaxonomy.combo_sets,
        gen=TestTaxonomy.combo_sets,
    )
    def test_set_intersection_oracle(self, gt, gen):
        def table(sup):
            return metrics.JointTable(
                ("a", "b"), {c: 1 / len(sup) for c in sup}, 6
            )

        prec, rec = metrics.precision_recall(table(gt), table(gen))
        assert prec == len(gt & gen) / len(gen)
        assert rec == len(gt & gen) / len(gt)


def curve_data(seed, n_gen=300):
    """Ground truth / train / generated triple with a guaranteed sampling zero:
    the (a2, b1) combination is stripped from the training rows."""
    gt = random_ds(400, seed)
    keep = ~((gt.rows[:, 0] == 2) & (gt.rows[:, 1] == 1))
    train = Dataset(SCHEMA, gt.rows[keep][:200])
    gen = random_ds(n_gen, seed + 1000)
    return gt, train, gen


class TestSamplingCurve:
    def test_full_pool_matches_single_shot(self):
        gt, train, gen = curve_data(18, n_gen=250)
        recs = metrics.sampling_curve(gt, train, gen, ["a", "b"], [gen.n_rows], 0)
        t = metrics.classify_taxonomy(gt, train, gen, ["a", "b"])
        gs, sz, stz = metrics.zero_scores(t, gt, train, gen, ["a", "b"])
        assert recs[0]["score_gs"] == gs
        assert recs[0]["score_sz"] == sz
        assert recs[0]["score_stz"] == stz

    def test_levels_must_ascend(self):
        gt, train, gen = random_ds(100, 21), random_ds(100, 22), random_ds(100, 23)
        with pytest.raises(ValidationError):
            metrics.sampling_curve(gt, train, gen, ["a"], [50, 20], 0)

    def test_level_exceeding_pool(self):
        gt, train, gen = random_ds(100, 24), random_ds(100, 25), random_ds(100, 26)
        with pytest.raises(ValidationError):
            metrics.sampling_curve(gt, train, gen, ["a"], [101], 0)

    def test_callable_source(self):
        gt, train, _ = curve_data(27)
        calls = []

        def source(n, seed):
            calls.append((n, seed))
            return random_ds(n, seed)

        recs = metrics.sampling_curve(gt, train, source, ["a", "b"], [50, 100], 7)
        assert calls == [(50, 7), (100, 8)]
        assert [r["level"] for r in recs] == [50, 100]

    def test_deterministic(self):
        gt, train, gen = curve_data(29, n_gen=500)
        a = metrics.sampling_curve(gt, train, gen, ["a", "b"], [100, 300], 3)
        b = metrics.sampling_curve(gt, train, gen, ["a", "b"], [100, 300], 3)
        assert a == b


class TestFortyFiveDegreeExport:
    def test_identical_tables_on_diagonal(self, tmp_path):
        jt = metrics.joint_table(random_ds(200, 32), ["a", "b"])
        path = tmp_path / "chart.csv"
        metrics.export_forty_five_degree(jt, jt, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "combination,gt_prob,syn_prob"
        assert len(lines) - 1 == len(jt.support())
        for line in lines[1:]:
            _, g, s = line.split(",")
            assert g == s

    def test_columns_sum_to_at_most_one(self, tmp_path):
        gt = metrics.joint_table(random_ds(200, 33), ["a", "c"])
        syn = metrics.joint_table(random_ds(150, 34), ["a", "c"])
        path = tmp_path / "chart.csv"
        metrics.export_forty_five_degree(gt, syn, path)
        rows = path.read_text().strip().split("\n")[1:]
        gsum = sum(float(r.split(",")[1]) for r in rows)
        ssum = sum(float(r.split(",")[2]) for r in rows)
        assert gsum <= 1 + 1e-9 and ssum <= 1 + 1e-9
        assert len(rows) == len(gt.support() | syn.support())


@pytest.fixture(scope="module")
def report():
    gt, train, syn = curve_data(35, n_gen=350)
    return metrics.evaluation_report(
        gt, train, syn, [["a", "b"], ["a", "b", "c"]], [100, 300], seed=1
    )


class TestEvaluationReport:

    def test_validates_against_published_schema(self, report):
        jsonschema.validate(report, metrics.REPORT_SCHEMA)

    def test_covers_all_attributes_and_joints(self, report):
        assert [e["attribute"] for e in report["attribute_level"]] == ["a", "b", "c"]
        assert [e["k"] for e in report["joints"]] == [2, 3]
        assert all(c["records"] for c in report["sampling_curves"])

    def test_round_trips_through_json(self, report, tmp_path):
        import json

        path = tmp_path / "report.json"
        metrics.save_report(report, path)
        assert json.loads(path.read_text()) == json.loads(
            json.dumps(report, sort_keys=True)
        )

    def test_undefined_metrics_carry_reasons(self):
        # synthetic data missing every value of one attribute
        gt = random_ds(100, 38)
        rows = random_ds(100, 39).rows.copy()
        rows[:, 1] = MISSING
        syn = Dataset(SCHEMA, rows)
        rep = metrics.evaluation_report(gt, gt, syn, [], [], seed=0)
        entry = next(e for e in rep["attribute_level"] if e["attribute"] == "b")
        assert entry["category_adherence"]["value"] is None
        assert entry["category_adherence"]["reason"]
        jsonschema.validate(rep, metrics.REPORT_SCHEMA)
