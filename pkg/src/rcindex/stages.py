"""File-level pipeline stages.

Each stage reads files written by earlier stages and writes its own outputs
into an output directory, returning the list of paths it wrote. The CLI
subcommands are thin wrappers over these functions.
"""

import csv
import hashlib
import json
import math
import shutil
from pathlib import Path

import numpy as np

from . import bayes, factor, index, panel, plots, reliability
from .errors import ValidationError
from .matrix_stats import CorrelationMatrix, pearson_corr, zscore

CROSS_SECTION = "cross_section.csv"
PANEL_IMPUTED = "panel_imputed.csv"
DICTIONARY = "dictionary.json"
EFA_MODEL = "efa_model.json"
INDEX_SCORES = "index_scores.csv"


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj):
    # json writes floats with repr, which round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")
    return Path(path)


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _out(out_dir, name):
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _require(path, stage):
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"{stage}: missing input {p} (run the earlier stage first)")
    return p


def analysis_variables(specs):
    """Labels of the variables entering factor analysis, in dictionary order."""
    return [s.label for s in specs
            if s.group_hint in ("capacity", "governance", "unassigned") and s.missing_policy != "drop_variable"]


def outcome_spec(specs):
    panel.validate_dictionary(specs, require_outcome=True)
    return next(s for s in specs if s.group_hint == "outcome" and s.missing_policy != "drop_variable")


def publication_variable(specs):
    for s in specs:
        if s.name == "Pubs":
            return s.name
    raise ValidationError("dictionary has no 'Pubs' variable for the publication filter")


# ------------------------------------------------------------------- ingest


def ingest(data_path, dictionary_path, out_dir, year_from=None, year_to=None, exclude_incomplete=False):
    specs = panel.load_dictionary(dictionary_path)
    raw = panel.load_panel(data_path, specs=specs)
    imputed = panel.apply_missing_policy(raw, specs, on_empty="exclude" if exclude_incomplete else "error")
    cs = panel.apply_transforms(panel.collapse_to_cross_section(imputed, year_from, year_to), specs)

    written = []
    dict_out = _out(out_dir, DICTIONARY)
    if dictionary_path is None:
        dict_out.write_text(panel.default_dictionary_path().read_text(encoding="utf-8"), encoding="utf-8")
    elif Path(dictionary_path).resolve() != dict_out.resolve():
        shutil.copyfile(dictionary_path, dict_out)
    written.append(dict_out)

    kept_specs = [s for s in specs if s.missing_policy != "drop_variable"]
    p_out = _out(out_dir, PANEL_IMPUTED)
    panel.write_panel_csv(imputed, p_out, kept_specs)
    written.append(p_out)
    cs_out = _out(out_dir, CROSS_SECTION)
    cs.to_csv(cs_out)
    written.append(cs_out)
    report = {
        "n_countries": len(imputed.countries),
        "years": [imputed.years[0] if year_from is None else int(year_from),
                  imputed.years[-1] if year_to is None else int(year_to)],
        "panel_years": [raw.years[0], raw.years[-1]],
        "missing_cells_before_imputation": raw.missing_count(),
        "dropped_variables": [s.name for s in specs if s.missing_policy == "drop_variable"],
        "excluded_countries": imputed.excluded,
        "variables": cs.variables,
    }
    written.append(write_json(_out(out_dir, "ingest_report.json"), report))
    return written


def load_stage_inputs(work_dir, dictionary_path=None):
    work = Path(work_dir)
    specs = panel.load_dictionary(dictionary_path or _require(work / DICTIONARY, "stage"))
    cs = panel.CrossSection.from_csv(_require(work / CROSS_SECTION, "stage"))
    return specs, cs


# ----------------------------------------------------------------- describe


def describe(cross_section_path, out_dir, fmt="csv"):
    cs = panel.CrossSection.from_csv(_require(cross_section_path, "describe"))
    table = panel.describe(cs)
    written = []
    if fmt == "csv":
        p = _out(out_dir, "descriptives.csv")
        table.to_csv(p)
    else:
        p = write_json(_out(out_dir, "descriptives.json"), list(table.rows()))
    written.append(p)
    corr = CorrelationMatrix(cs.variables, pearson_corr(cs.matrix, cs.variables))
    p = _out(out_dir, "correlation.csv")
    corr.to_csv(p)
    written.append(p)
    return written


# ----------------------------------------------------------------- adequacy


def adequacy(cross_section_path, dictionary_path, out_dir):
    cs = panel.CrossSection.from_csv(_require(cross_section_path, "adequacy"))
    specs = panel.load_dictionary(_require(dictionary_path, "adequacy"))
    x = cs.select(analysis_variables(specs))
    r = pearson_corr(x.matrix, x.variables)
    report = factor.adequacy(r, x.matrix.shape[0], x.variables)
    return [write_json(_out(out_dir, "adequacy.json"), report.to_json())]


# ---------------------------------------------------------------------- efa


def factor_assignment(model):
    """Index of the factor on which each variable has its largest absolute loading."""
    return [int(np.argmax(np.abs(row))) for row in model.rotated_loadings]


def factor_labels(model, specs):
    """Name each factor by the majority group hint of the variables assigned to it."""
    lookup = panel.spec_by_name(specs)
    assign = factor_assignment(model)
    labels = []
    for f in range(model.n_factors):
        hints = [lookup[v].group_hint for v, a in zip(model.variables, assign) if a == f]
        hints = [h for h in hints if h in ("capacity", "governance")]
        best = max(sorted(set(hints)), key=hints.count) if hints else None
        labels.append(best if best and best not in labels else f"factor{f + 1}")
    return labels


def efa(cross_section_path, dictionary_path, out_dir, n_factors=2, normalize=True, fmt="csv"):
    cs = panel.CrossSection.from_csv(_require(cross_section_path, "efa"))
    specs = panel.load_dictionary(_require(dictionary_path, "efa"))
    x = cs.select(analysis_variables(specs))
    p = len(x.variables)
    if not 1 <= n_factors < p:
        raise ValidationError(f"--factors must satisfy 1 <= k < p (k={n_factors}, p={p})")
    r = pearson_corr(x.matrix, x.variables)
    model = factor.fit_efa(r, n_factors, x.variables, normalize=normalize)
    labels = factor_labels(model, specs)
    sc = factor.scree(r)

    written = []
    obj = model.to_json()
    obj["factor_labels"] = labels
    obj["assignment"] = factor_assignment(model)
    obj["kaiser_normalization"] = bool(normalize)
    written.append(write_json(_out(out_dir, EFA_MODEL), obj))

    rows = factor.loading_table(model.rotated_loadings, model.variables)
    if fmt == "csv":
        path = _out(out_dir, "loadings.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variable", *[f"Factor{j + 1}" for j in range(n_factors)], "h2", "u2", "com"])
            for row in rows:
                w.writerow([row["variable"], *(panel.format_float(v) for v in row["loadings"]),
                            *(panel.format_float(row[k]) for k in ("h2", "u2", "com"))])
        written.append(path)
    else:
        written.append(write_json(_out(out_dir, "loadings.json"), {"factor_labels": labels, "rows": rows}))
    written.append(write_json(_out(out_dir, "scree.json"), sc.to_json()))
    svg = _out(out_dir, "scree.svg")
    svg.write_text(plots.scree_svg(sc.eigenvalues, sc.cumulative_variance_proportion), encoding="utf-8")
    written.append(svg)
    return written


def load_efa(path):
    obj = read_json(_require(path, "efa model"))
    model = factor.FactorModel.from_json(obj)
    return model, obj.get("factor_labels") or [f"factor{j + 1}" for j in range(model.n_factors)]


def item_sets(model, labels):
    assign = factor_assignment(model)
    return {labels[f]: [v for v, a in zip(model.variables, assign) if a == f] for f in range(model.n_factors)}


# -------------------------------------------------------------- reliability


def reliability_stage(cross_section_path, out_dir, efa_path=None, items=None):
    cs = panel.CrossSection.from_csv(_require(cross_section_path, "reliability"))
    if items:
        sets = {"items": list(items)}
    elif efa_path is not None:
        sets = item_sets(*load_efa(efa_path))
    else:
        raise ValidationError("reliability needs --efa or --items")
    out = {}
    for label, vars_ in sets.items():
        unknown = [v for v in vars_ if v not in cs.variables]
        if unknown:
            raise ValidationError(f"unknown item(s) {unknown}")
        out[label] = reliability.reliability(cs.select(vars_).matrix, vars_).to_json()
    return [write_json(_out(out_dir, "reliability.json"), out)]


# -------------------------------------------------------------------- index


def compute_indexes(cs, model, labels):
    """Factor-score and summative IndexScores for the capacity and governance factors."""
    if "capacity" not in labels or "governance" not in labels:
        raise ValidationError(f"factors could not be labelled capacity and governance (got {labels})")
    x = cs.select(model.variables)
    z = zscore(x.matrix, x.variables)
    r = pearson_corr(x.matrix, x.variables)
    fs = factor.regression_scores(z, r, model.rotated_loadings, x.countries)
    ci, gi = labels.index("capacity"), labels.index("governance")
    by_factor = index.build_index(fs.scores[:, ci], fs.scores[:, gi], "factor_scores", x.countries)

    sets = item_sets(model, labels)
    cols = {lab: [model.variables.index(v) for v in vars_] for lab, vars_ in sets.items()}
    summ = index.build_index(index.summative_index(z, cols["capacity"]),
                             index.summative_index(z, cols["governance"]), "summative", x.countries)
    return by_factor, summ


INDEX_COLUMNS = ("fs_capacity", "fs_governance", "fs_interaction", "sum_capacity", "sum_governance", "sum_interaction")


def index_stage(cross_section_path, efa_path, out_dir):
    cs = panel.CrossSection.from_csv(_require(cross_section_path, "index"))
    model, labels = load_efa(efa_path)
    fs, sm = compute_indexes(cs, model, labels)
    path = _out(out_dir, INDEX_SCORES)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country_code", "country_name", "region", *INDEX_COLUMNS])
        for i, c in enumerate(fs.countries):
            vals = (fs.capacity[i], fs.governance[i], fs.interaction[i],
                    sm.capacity[i], sm.governance[i], sm.interaction[i])
            w.writerow([c.code, c.name, c.region, *(panel.format_float(v) for v in vals)])
    return [path]


def read_index_scores(path):
    cs = panel.CrossSection.from_csv(_require(path, "rank"))
    if list(cs.variables) != list(INDEX_COLUMNS):
        raise ValidationError(f"{path}: unexpected index columns {cs.variables}")
    return cs


# --------------------------------------------------------------------- rank

MEASURES = (("capacity", "Capacity"), ("governance", "Governance"), ("interaction", "Capacity x Governance"))


def rank_stage(index_path, out_dir, fmt="csv"):
    scores = read_index_scores(index_path)
    written = []
    for prefix, method, title in (("fs", "factor_scores", "Factor score country ranks"),
                                  ("sum", "summative", "Summative index country ranks")):
        strips = []
        for measure, heading in MEASURES:
            ranking = index.rank(scores.column(f"{prefix}_{measure}"), scores.countries)
            stem = f"rank_{method}_{measure}"
            if fmt == "csv":
                p = _out(out_dir, stem + ".csv")
                ranking.to_csv(p)
            else:
                p = write_json(_out(out_dir, stem + ".json"), [
                    {"rank": r, "country_code": c.code, "country_name": c.name, "score": s}
                    for r, c, s in ranking.ranks])
            written.append(p)
            strips.append((heading, [(c.name, s) for _, c, s in ranking.ranks]))
        svg = _out(out_dir, f"rank_{method}.svg")
        svg.write_text(plots.rank_strips_svg(strips, title), encoding="utf-8")
        written.append(svg)
    return written


# ------------------------------------------------------------------ regress


def publication_totals(imputed, specs, year_from=None, year_to=None):
    totals = panel.total_over_years(imputed, publication_variable(specs), year_from, year_to)
    return {c.code: float(t) for c, t in zip(imputed.countries, totals)}


def cross_regression_data(cs, scores, outcome):
    """Rows from the collapsed outcome and per-country Capacity/Governance scores."""
    codes = cs.codes
    if scores.codes != codes:
        common = set(codes) & set(scores.codes)
        cs = cs.subset_countries(common)
        scores_idx = [scores.codes.index(c) for c in cs.codes]
    else:
        scores_idx = list(range(len(codes)))
    x = np.column_stack([scores.capacity[scores_idx], scores.governance[scores_idx]])
    return bayes.RegressionData(
        y=cs.column(outcome), x=x, predictor_names=["Capacity", "Governance"],
        region=[c.region for c in cs.countries], country=[c.code for c in cs.countries],
    )


def panel_regression_data(imputed, specs, model, labels, outcome):
    """Country-year rows with summative Capacity/Governance computed per country-year.

    Items are log-transformed per cell, z-scored over all pooled country-years,
    averaged within each factor's item set and restandardized.
    """
    transformed = panel.transform_panel(imputed, specs)
    n_c, n_y, _ = transformed.values.shape
    flat = transformed.values.reshape(n_c * n_y, -1)
    sets = item_sets(model, labels)
    cols = [transformed.variables.index(v) for v in model.variables]
    z = zscore(flat[:, cols], model.variables)
    cap = index.summative_index(z, [model.variables.index(v) for v in sets["capacity"]])
    gov = index.summative_index(z, [model.variables.index(v) for v in sets["governance"]])
    y = flat[:, transformed.variables.index(outcome)]
    return bayes.RegressionData(
        y=y, x=np.column_stack([cap, gov]), predictor_names=["Capacity", "Governance"],
        region=[c.region for c in imputed.countries for _ in imputed.years],
        country=[c.code for c in imputed.countries for _ in imputed.years],
        year=[yr for _ in imputed.countries for yr in imputed.years],
    )


def regress(work_dir, out_dir, model_kind="cross", threshold=50, chains=4, iterations=2000, warmup=1000,
            seed=None, predictors=None, draws_csv=False, workers=1):
    work = Path(work_dir)
    specs = panel.load_dictionary(_require(work / DICTIONARY, "regress"))
    outcome = outcome_spec(specs).name
    imputed = panel.load_panel(_require(work / PANEL_IMPUTED, "regress"),
                               specs=[s for s in specs if s.missing_policy != "drop_variable"])
    report = read_json(_require(work / "ingest_report.json", "regress"))
    year_from, year_to = report["years"]
    totals = publication_totals(imputed, specs, year_from, year_to)

    if model_kind == "cross":
        source = predictors or "factor_scores"
        scores_cs = read_index_scores(work / INDEX_SCORES)
        prefix = "fs" if source == "factor_scores" else "sum"
        scores = index.IndexScores(scores_cs.countries, scores_cs.column(f"{prefix}_capacity"),
                                   scores_cs.column(f"{prefix}_governance"),
                                   scores_cs.column(f"{prefix}_interaction"), source)
        cs = panel.CrossSection.from_csv(_require(work / CROSS_SECTION, "regress"))
        data = cross_regression_data(cs, scores, outcome)
        grouping, year_fe = "region", False
    elif model_kind == "panel":
        source = predictors or "summative"
        if source != "summative":
            raise ValidationError("the panel model supports only summative predictors")
        model, labels = load_efa(work / EFA_MODEL)
        window = panel._year_slice(imputed, year_from, year_to)
        imputed.values = imputed.values[:, window, :]
        imputed.years = imputed.years[window]
        data = panel_regression_data(imputed, specs, model, labels, outcome)
        grouping, year_fe = "region_and_country", True
    else:
        raise ValidationError(f"--model must be 'cross' or 'panel', got {model_kind!r}")

    data, removed = bayes.filter_low_pub(data, totals, threshold)
    spec = bayes.ModelSpec(outcome=outcome, year_fixed_effects=year_fe, grouping=grouping,
                           min_publications_filter=threshold, chains=chains, iterations=iterations,
                           warmup=warmup, seed=seed)
    post = bayes.fit(data, spec, workers=workers)
    post.removed = removed
    post.predictor_source = source
    written = [write_json(_out(out_dir, f"posterior_{model_kind}.json"), post.to_json())]
    if draws_csv:
        p = _out(out_dir, f"draws_{model_kind}.csv")
        post.draws_csv(p)
        written.append(p)
    return written
