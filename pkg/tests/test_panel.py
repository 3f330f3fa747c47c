import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcindex import panel
from rcindex.errors import ValidationError
from rcindex.panel import (
    Country,
    CrossSection,
    VariableSpec,
    apply_missing_policy,
    apply_transforms,
    collapse_to_cross_section,
    describe,
    load_panel,
)
from rcindex.synth import generate_synthetic_panel, reference_spec

HEADER = "country_code,country_name,region,year,A,B\n"


def test_default_dictionary_mirrors_variable_table(specs):
    names = [s.name for s in specs]
    assert names[:14] == ["RD", "ResPatent", "AcadInst", "NonAcadInst", "Authors", "Pubs", "IntlPubs",
                          "OpenInternet", "RuleLaw", "RegQual", "Stability", "NonCorrupt", "Polyarchy",
                          "AcadFreedom"]
    by = {s.name: s for s in specs}
    assert by["RD"].missing_policy == by["ResPatent"].missing_policy == "recode_zero"
    assert by["TertiaryEnrol"].missing_policy == "drop_variable"
    assert [s.name for s in specs if s.group_hint == "outcome"] == ["FWCI"]
    assert all(by[n].transform == "log1p" for n in names[:7])
    assert all(by[n].transform == "none" for n in names[7:14])


def test_load_single_row(write_csv, small_dictionary):
    p = load_panel(write_csv(HEADER + "USA,United States,NA_region,2015,3,0.5\n"), small_dictionary)
    assert len(p.countries) == 1 and p.years == [2015]
    assert p.values.shape == (1, 1, 2)
    np.testing.assert_array_equal(p.values[0, 0], [3.0, 0.5])


def test_load_duplicate_row_named(write_csv, small_dictionary):
    text = HEADER + "USA,United States,R1,2015,3,0.5\nUSA,United States,R1,2015,4,0.6\n"
    with pytest.raises(ValidationError, match=r"duplicate row for \(USA, 2015\)"):
        load_panel(write_csv(text), small_dictionary)


def test_load_unknown_dictionary_variable(write_csv, tmp_path):
    import json

    d = tmp_path / "d.json"
    d.write_text(json.dumps([{"name": "Zzz"}]))
    with pytest.raises(ValidationError, match="Zzz"):
        load_panel(write_csv(HEADER + "USA,United States,R1,2015,3,0.5\n"), d)


def test_load_non_numeric_cell_has_coordinates(write_csv, small_dictionary):
    text = HEADER + "USA,United States,R1,2015,3,0.5\nFRA,France,R2,2015,abc,0.1\n"
    with pytest.raises(ValidationError, match=r"panel.csv:3.*'abc'.*'A'"):
        load_panel(write_csv(text), small_dictionary)


def test_load_requires_region(write_csv, small_dictionary):
    with pytest.raises(ValidationError, match="region"):
        load_panel(write_csv(HEADER + "USA,United States,,2015,3,0.5\n"), small_dictionary)


def test_load_missing_cells_and_gap_years(write_csv, small_dictionary):
    text = HEADER + "USA,United States,R1,2013,,0.5\nUSA,United States,R1,2015,2,\n"
    p = load_panel(write_csv(text), small_dictionary)
    assert p.years == [2013, 2014, 2015]
    assert np.isnan(p.values[0, 0, 0]) and np.isnan(p.values[0, 1]).all() and np.isnan(p.values[0, 2, 1])


def test_load_sorts_countries(write_csv, small_dictionary):
    text = HEADER + "ZAF,South Africa,R3,2015,1,1\nARG,Argentina,R2,2015,1,1\n"
    assert load_panel(write_csv(text), small_dictionary).codes == ["ARG", "ZAF"]


def test_bundled_dataset_loads(specs):
    from rcindex.cli import bundled_dataset

    p = load_panel(bundled_dataset(), specs=specs)
    assert len(p.countries) == 172 and len(p.years) == 9 and len(p.variables) == 16


def _panel(values, variables=("A", "B")):
    values = np.asarray(values, dtype=float)
    countries = [Country(f"C{i}", f"Country {i}", "R") for i in range(values.shape[0])]
    return panel.Panel(countries, list(range(2013, 2013 + values.shape[1])), list(variables), values)


SPECS = [
    VariableSpec("A", "A", "log1p", "recode_zero", "capacity"),
    VariableSpec("B", "B", "none", "country_mean", "governance"),
]


def test_recode_zero_fills_whole_country():
    p = _panel([[[np.nan, 1.0], [np.nan, 2.0]], [[3.0, 1.0], [np.nan, 1.0]]])
    out = apply_missing_policy(p, SPECS)
    np.testing.assert_array_equal(out.values[0, :, 0], [0.0, 0.0])
    np.testing.assert_array_equal(out.values[1, :, 0], [3.0, 0.0])


def test_country_mean_fill():
    p = _panel([[[1.0, 2.0], [1.0, np.nan], [1.0, 4.0]]])
    out = apply_missing_policy(p, SPECS)
    np.testing.assert_array_equal(out.values[0, :, 1], [2.0, 3.0, 4.0])


def test_full_data_unchanged(rng):
    vals = rng.uniform(1, 5, size=(4, 3, 2))
    out = apply_missing_policy(_panel(vals), SPECS)
    np.testing.assert_array_equal(out.values, vals)


def test_country_mean_without_observations_errors():
    p = _panel([[[1.0, np.nan], [1.0, np.nan]], [[1.0, 1.0], [1.0, 2.0]]])
    with pytest.raises(ValidationError, match="C0/B"):
        apply_missing_policy(p, SPECS)


def test_country_mean_without_observations_can_exclude():
    p = _panel([[[1.0, np.nan], [1.0, np.nan]], [[1.0, 1.0], [1.0, 2.0]]])
    out = apply_missing_policy(p, SPECS, on_empty="exclude")
    assert out.codes == ["C1"]
    assert "C0" in out.excluded and "B" in out.excluded["C0"]


def test_drop_variable(specs):
    p = generate_synthetic_panel(3, 20, 3)
    out = apply_missing_policy(p, specs)
    assert "TertiaryEnrol" in p.variables and "TertiaryEnrol" not in out.variables


def test_imputation_idempotent(specs):
    p = generate_synthetic_panel(4, 40, 5, reference_spec(zero_country_rate=0.2, cell_missing_rate=0.2))
    once = apply_missing_policy(p, specs)
    assert once.missing_count() == 0
    twice = apply_missing_policy(once, specs)
    np.testing.assert_array_equal(once.values, twice.values)


def test_collapse_single_year_identity(rng):
    vals = rng.normal(size=(3, 4, 2))
    cs = collapse_to_cross_section(_panel(vals), 2014, 2014)
    np.testing.assert_array_equal(cs.matrix, vals[:, 1, :])


def test_collapse_mean():
    cs = collapse_to_cross_section(_panel([[[1.0, 0.0], [3.0, 0.0]]]))
    assert cs.matrix[0, 0] == 2.0


def test_collapse_identical_years_exact(rng):
    year = rng.normal(size=(5, 1, 2))
    cs = collapse_to_cross_section(_panel(np.repeat(year, 9, axis=1)))
    np.testing.assert_array_equal(cs.matrix, year[:, 0, :])


def test_collapse_errors(rng):
    p = _panel(rng.normal(size=(2, 3, 2)))
    with pytest.raises(ValidationError, match="empty year range"):
        collapse_to_cross_section(p, 2015, 2014)
    with pytest.raises(ValidationError, match="outside"):
        collapse_to_cross_section(p, 2010, 2014)
    p.values[0, 0, 0] = np.nan
    with pytest.raises(ValidationError, match="missing"):
        collapse_to_cross_section(p)


def _cs(matrix, variables=("A", "B")):
    matrix = np.asarray(matrix, dtype=float)
    return CrossSection([Country(f"C{i}", "", "R") for i in range(matrix.shape[0])], list(variables), matrix)


def test_transforms():
    out = apply_transforms(_cs([[0.0, -2.0], [math.e - 1, 5.0]]), SPECS)
    assert out.variables == ["ln_A", "B"]
    assert out.matrix[0, 0] == 0.0
    assert out.matrix[1, 0] == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(out.matrix[:, 1], [-2.0, 5.0])


def test_transform_negative_rejected():
    with pytest.raises(ValidationError, match=r"C1, A"):
        apply_transforms(_cs([[1.0, 0.0], [-0.5, 0.0]]), SPECS)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e12), min_size=2, max_size=30))
def test_log1p_preserves_order(xs):
    out = apply_transforms(_cs(np.column_stack([xs, xs])), SPECS).matrix[:, 0]
    order_in = np.argsort(xs, kind="stable")
    assert np.all(np.diff(out[order_in]) >= 0)


def test_describe_examples():
    t = describe(_cs([[0.0, 1.0], [0.0, 2.0], [0.0, 3.0]]))
    assert t.mean[0] == 0.0 and t.sd[0] == 0.0
    assert t.mean[1] == 2.0 and t.sd[1] == 1.0
    assert list(t.n) == [3, 3]


def test_describe_bounds(specs):
    p = apply_missing_policy(generate_synthetic_panel(5, 60, 4), specs)
    cs = apply_transforms(collapse_to_cross_section(p), specs)
    t = describe(cs)
    assert np.all(t.min <= t.mean) and np.all(t.mean <= t.max) and np.all(t.sd >= 0)
    assert np.all(cs.matrix >= t.min) and np.all(cs.matrix <= t.max)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=6, max_size=6))
def test_cross_section_csv_round_trip(tmp_path_factory, values):
    cs = CrossSection([Country("A1", "Alpha, Inc", "R 1"), Country("B2", 'Beta "B"', "R2"),
                       Country("C3", "Gamma", "R3")], ["x", "ln_y"], np.array(values).reshape(3, 2))
    path = tmp_path_factory.mktemp("rt") / "cs.csv"
    cs.to_csv(path)
    back = CrossSection.from_csv(path)
    assert back.countries == cs.countries and back.variables == cs.variables
    np.testing.assert_array_equal(back.matrix, cs.matrix)


def test_panel_csv_round_trip(tmp_path, specs):
    p = generate_synthetic_panel(8, 12, 3, reference_spec(cell_missing_rate=0.1))
    path = tmp_path / "p.csv"
    panel.write_panel_csv(p, path, specs)
    back = load_panel(path, specs=specs)
    np.testing.assert_array_equal(np.isnan(back.values), np.isnan(p.values))
    np.testing.assert_array_equal(np.nan_to_num(back.values), np.nan_to_num(p.values))


# ---------------------------------------------------------------- generator


def test_generator_deterministic(tmp_path, specs):
    a = generate_synthetic_panel(11, 30, 4)
    b = generate_synthetic_panel(11, 30, 4)
    panel.write_panel_csv(a, tmp_path / "a.csv", specs)
    panel.write_panel_csv(b, tmp_path / "b.csv", specs)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_generator_rejects_bad_dimensions():
    with pytest.raises(ValidationError):
        generate_synthetic_panel(1, 0, 3)
    with pytest.raises(ValidationError):
        generate_synthetic_panel(1, 5, -1)


def test_generator_noiseless_is_rank_two(specs):
    # counts centred far from zero so expm1/log1p stays exactly invertible
    spec = reference_spec(noise_sd=0.0, year_sd=0.0, loc=np.full(14, 12.0))
    p, scores, latent = generate_synthetic_panel(2, 80, 3, spec, return_latent=True)
    assert np.linalg.matrix_rank(latent, tol=1e-9) == 2
    cs = apply_transforms(collapse_to_cross_section(apply_missing_policy(p, specs)), specs)
    x = cs.select([s.label for s in specs if s.group_hint in ("capacity", "governance")]).matrix
    sv = np.linalg.svd(x - x.mean(axis=0), compute_uv=False)
    assert sv[2] / sv[0] < 1e-9


def test_generator_regions_round_robin():
    p = generate_synthetic_panel(1, 25, 2, reference_spec(n_regions=10))
    assert [c.region for c in p.countries[:11]] == [f"region_{i:02d}" for i in range(1, 11)] + ["region_01"]
