"""Loading, validating, imputing, collapsing and transforming the country-year panel.

The panel CSV has one row per country-year::

    country_code,country_name,region,year,<source_column...>

Empty fields are missing values. The data dictionary is a JSON array of
variable specs (see ``data/default_dictionary.json``) mapping CSV columns to
analysis variables, their missing-data policy and transform.
"""

import csv
import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .errors import ValidationError

TRANSFORMS = ("none", "log1p")
MISSING_POLICIES = ("recode_zero", "country_mean", "drop_variable")
GROUP_HINTS = ("capacity", "governance", "outcome", "unassigned")
ID_COLUMNS = ("country_code", "country_name", "region", "year")
MISSING_TOKENS = ("", "NA", "NaN", "nan")


@dataclass(frozen=True)
class VariableSpec:
    name: str
    source_column: str
    transform: str = "none"
    missing_policy: str = "country_mean"
    group_hint: str = "unassigned"
    description: str = ""

    def __post_init__(self):
        if not self.name:
            raise ValidationError("variable spec needs a non-empty name")
        if self.transform not in TRANSFORMS:
            raise ValidationError(f"{self.name}: unknown transform {self.transform!r}")
        if self.missing_policy not in MISSING_POLICIES:
            raise ValidationError(f"{self.name}: unknown missing_policy {self.missing_policy!r}")
        if self.group_hint not in GROUP_HINTS:
            raise ValidationError(f"{self.name}: unknown group_hint {self.group_hint!r}")

    @property
    def label(self):
        """Column label after transforms, e.g. ``ln_RD``."""
        return f"ln_{self.name}" if self.transform == "log1p" else self.name


@dataclass(frozen=True)
class Country:
    code: str
    name: str
    region: str


@dataclass
class Panel:
    """Country x year x variable values; ``nan`` marks a missing cell."""

    countries: list
    years: list
    variables: list
    values: np.ndarray
    excluded: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.countries), len(self.years), len(self.variables))
        if self.values.shape != shape:
            raise ValidationError(f"panel values have shape {self.values.shape}, expected {shape}")

    def column(self, name):
        return self.values[:, :, self.variables.index(name)]

    @property
    def codes(self):
        return [c.code for c in self.countries]

    def missing_count(self):
        return int(np.isnan(self.values).sum())


@dataclass
class CrossSection:
    """One row per country (sorted by code), complete real matrix."""

    countries: list
    variables: list
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (len(self.countries), len(self.variables)):
            raise ValidationError("cross-section matrix shape does not match labels")

    @property
    def codes(self):
        return [c.code for c in self.countries]

    def column(self, name):
        return self.matrix[:, self.variables.index(name)]

    def select(self, variables):
        idx = [self.variables.index(v) for v in variables]
        return CrossSection(list(self.countries), list(variables), self.matrix[:, idx])

    def subset_countries(self, codes):
        keep = set(codes)
        idx = [i for i, c in enumerate(self.countries) if c.code in keep]
        return CrossSection([self.countries[i] for i in idx], list(self.variables), self.matrix[idx])

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["country_code", "country_name", "region", *self.variables])
            for c, row in zip(self.countries, self.matrix):
                w.writerow([c.code, c.name, c.region, *(format_float(v) for v in row)])

    @classmethod
    def from_csv(cls, path):
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:3] != ["country_code", "country_name", "region"]:
                raise ValidationError(f"{path}: not a cross-section CSV")
            countries, rows = [], []
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != len(header):
                    raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields")
                countries.append(Country(rec[0], rec[1], rec[2]))
                rows.append([_parse_number(v, path, lineno, h) for v, h in zip(rec[3:], header[3:])])
        matrix = np.array(rows, dtype=float).reshape(len(countries), len(header) - 3)
        if np.isnan(matrix).any():
            raise ValidationError(f"{path}: cross-section contains missing cells")
        return cls(countries, header[3:], matrix)

    def to_json(self):
        return {
            "countries": [c.code for c in self.countries],
            "variables": list(self.variables),
            "matrix": self.matrix.tolist(),
        }


@dataclass
class DescriptiveTable:
    variables: list
    n: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    min: np.ndarray
    max: np.ndarray

    def rows(self):
        for j, name in enumerate(self.variables):
            yield {
                "variable": name,
                "n": int(self.n[j]),
                "mean": float(self.mean[j]),
                "sd": float(self.sd[j]),
                "min": float(self.min[j]),
                "max": float(self.max[j]),
            }

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variable", "n", "mean", "sd", "min", "max"])
            for r in self.rows():
                w.writerow([r["variable"], r["n"], *(format_float(r[k]) for k in ("mean", "sd", "min", "max"))])


def format_float(v):
    """17 significant digits: enough for an exact float round trip."""
    return format(float(v), ".17g")


def _parse_number(text, path, lineno, column):
    text = text.strip()
    if text in MISSING_TOKENS:
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(
            f"{path}:{lineno}: non-numeric value {text!r} in column {column!r}"
        ) from None
    if not math.isfinite(value):
        raise ValidationError(f"{path}:{lineno}: non-finite value {text!r} in column {column!r}")
    return value


# ---------------------------------------------------------------- dictionary


def default_dictionary_path():
    return resources.files("rcindex") / "data" / "default_dictionary.json"


def load_dictionary(path=None):
    """Read a JSON array of variable specs; ``None`` loads the bundled default."""
    if path is None:
        raw = json.loads(default_dictionary_path().read_text(encoding="utf-8"))
    else:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    if not isinstance(raw, list) or not raw:
        raise ValidationError("data dictionary must be a non-empty JSON array")
    specs = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ValidationError(f"dictionary entry {i} is not a variable spec object")
        known = {"name", "source_column", "transform", "missing_policy", "group_hint", "description"}
        unknown = set(entry) - known - {"note"}
        if unknown:
            raise ValidationError(f"dictionary entry {entry['name']!r}: unknown keys {sorted(unknown)}")
        kwargs = {k: entry[k] for k in known if k in entry}
        kwargs.setdefault("source_column", entry["name"])
        specs.append(VariableSpec(**kwargs))
    validate_dictionary(specs)
    return specs


def validate_dictionary(specs, require_outcome=False):
    names = [s.name for s in specs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValidationError(f"duplicate variable names in dictionary: {dupes}")
    outcomes = [s.name for s in specs if s.group_hint == "outcome" and s.missing_policy != "drop_variable"]
    if require_outcome and len(outcomes) != 1:
        raise ValidationError(f"regression needs exactly one outcome variable, found {outcomes}")
    return specs


def spec_by_name(specs):
    """Map both raw names and transformed labels to their spec."""
    out = {}
    for s in specs:
        out[s.name] = s
        out[s.label] = s
    return out


# -------------------------------------------------------------------- panel


def load_panel(csv_path, dictionary_path=None, specs=None):
    """Read a long-format country-year CSV into a :class:`Panel`.

    Country-years absent from the file are treated as all-missing. Variables
    appear in dictionary order; countries are sorted by code.
    """
    if specs is None:
        specs = load_dictionary(dictionary_path)
    with open(csv_path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{csv_path}: empty file")
        header = [h.strip() for h in header]
        if tuple(header[:4]) != ID_COLUMNS:
            raise ValidationError(
                f"{csv_path}: header must start with {','.join(ID_COLUMNS)}, got {header[:4]}"
            )
        missing_cols = [s.source_column for s in specs if s.source_column not in header]
        if missing_cols:
            raise ValidationError(f"{csv_path}: dictionary variables not in CSV header: {missing_cols}")
        col_index = [header.index(s.source_column) for s in specs]

        meta = {}
        records = {}
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != len(header):
                raise ValidationError(f"{csv_path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            code, name, region, year_text = (f.strip() for f in rec[:4])
            if not code:
                raise ValidationError(f"{csv_path}:{lineno}: empty country_code")
            if not region:
                raise ValidationError(f"{csv_path}:{lineno}: country {code} has an empty region")
            try:
                year = int(year_text)
            except ValueError:
                raise ValidationError(f"{csv_path}:{lineno}: bad year {year_text!r}") from None
            if code in meta and meta[code] != (name, region):
                raise ValidationError(
                    f"{csv_path}:{lineno}: country {code} has inconsistent name/region {meta[code]} vs {(name, region)}"
                )
            meta[code] = (name, region)
            if (code, year) in records:
                raise ValidationError(
                    f"{csv_path}:{lineno}: duplicate row for ({code}, {year}); first seen on line {records[(code, year)][0]}"
                )
            values = [_parse_number(rec[i], csv_path, lineno, header[i]) for i in col_index]
            records[(code, year)] = (lineno, values)

    if not records:
        raise ValidationError(f"{csv_path}: no data rows")
    codes = sorted(meta)
    all_years = sorted({y for _, y in records})
    years = list(range(all_years[0], all_years[-1] + 1))
    values = np.full((len(codes), len(years), len(specs)), np.nan)
    ci = {c: i for i, c in enumerate(codes)}
    for (code, year), (_, vals) in records.items():
        values[ci[code], year - years[0], :] = vals
    countries = [Country(c, *meta[c]) for c in codes]
    return Panel(countries, years, [s.name for s in specs], values)


def write_panel_csv(panel, path, specs=None):
    """Write a panel back in the input layout (one row per country-year)."""
    columns = list(panel.variables)
    if specs is not None:
        by_name = {s.name: s for s in specs}
        columns = [by_name[v].source_column if v in by_name else v for v in panel.variables]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ID_COLUMNS, *columns])
        for i, c in enumerate(panel.countries):
            for t, year in enumerate(panel.years):
                cells = ["" if np.isnan(v) else format_float(v) for v in panel.values[i, t]]
                w.writerow([c.code, c.name, c.region, year, *cells])


def apply_missing_policy(panel, specs, on_empty="error"):
    """Fill or drop missing cells according to each variable's policy.

    ``recode_zero`` sets every missing cell to 0. ``country_mean`` fills a
    country's gaps with the mean of its observed years. ``drop_variable``
    removes the variable.

    A country with no observations at all for a ``country_mean`` variable
    raises, unless ``on_empty="exclude"``; excluded countries are recorded in
    ``Panel.excluded`` with the reason.
    """
    if on_empty not in ("error", "exclude"):
        raise ValidationError(f"on_empty must be 'error' or 'exclude', got {on_empty!r}")
    by_name = {s.name: s for s in specs}
    absent = [v for v in panel.variables if v not in by_name]
    if absent:
        raise ValidationError(f"no missing-data policy for variables {absent}")

    keep_vars = [j for j, v in enumerate(panel.variables) if by_name[v].missing_policy != "drop_variable"]
    values = panel.values[:, :, keep_vars].copy()
    variables = [panel.variables[j] for j in keep_vars]
    excluded = dict(panel.excluded)
    empty = []

    for j, name in enumerate(variables):
        policy = by_name[name].missing_policy
        cells = values[:, :, j]
        if policy == "recode_zero":
            cells[np.isnan(cells)] = 0.0
        else:
            observed = ~np.isnan(cells)
            counts = observed.sum(axis=1)
            for i in np.flatnonzero(counts == 0):
                empty.append((panel.countries[i].code, name))
            sums = np.where(observed, cells, 0.0).sum(axis=1)
            means = np.divide(sums, counts, out=np.full(len(counts), np.nan), where=counts > 0)
            fill = np.broadcast_to(means[:, None], cells.shape)
            cells[~observed] = fill[~observed]

    if empty:
        if on_empty == "error":
            listing = ", ".join(f"{c}/{v}" for c, v in empty)
            raise ValidationError(f"country_mean imputation impossible, no observations for: {listing}")
        drop_codes = {}
        for code, var in empty:
            drop_codes.setdefault(code, []).append(var)
        for code, vars_ in drop_codes.items():
            excluded[code] = f"no observations for {', '.join(vars_)}"
        keep = [i for i, c in enumerate(panel.countries) if c.code not in drop_codes]
        return Panel([panel.countries[i] for i in keep], list(panel.years), variables, values[keep], excluded)

    return Panel(list(panel.countries), list(panel.years), variables, values, excluded)


def _year_slice(panel, year_from, year_to):
    year_from = panel.years[0] if year_from is None else int(year_from)
    year_to = panel.years[-1] if year_to is None else int(year_to)
    if year_from > year_to:
        raise ValidationError(f"empty year range {year_from}-{year_to}")
    if year_from < panel.years[0] or year_to > panel.years[-1]:
        raise ValidationError(
            f"year range {year_from}-{year_to} outside panel range {panel.years[0]}-{panel.years[-1]}"
        )
    return slice(year_from - panel.years[0], year_to - panel.years[0] + 1)


def collapse_to_cross_section(panel, year_from=None, year_to=None):
    """Within-country mean over the selected years."""
    window = panel.values[:, _year_slice(panel, year_from, year_to), :]
    if np.isnan(window).any():
        i, t, j = np.argwhere(np.isnan(window))[0]
        raise ValidationError(
            f"missing cell remains at ({panel.countries[i].code}, year offset {t}, {panel.variables[j]}); "
            "apply missing-data policies first"
        )
    # mean as offset from the first year so constant series come back bit-exact
    base = window[:, 0, :]
    return CrossSection(list(panel.countries), list(panel.variables), base + (window - base[:, None, :]).mean(axis=1))


def total_over_years(panel, variable, year_from=None, year_to=None):
    """Per-country sum of a raw panel variable over the year range."""
    window = panel.column(variable)[:, _year_slice(panel, year_from, year_to)]
    return np.nansum(window, axis=1)


def apply_transforms(cross_section, specs):
    """Apply each variable's transform; log-transformed columns get an ``ln_`` prefix."""
    lookup = spec_by_name(specs)
    matrix = cross_section.matrix.copy()
    labels = []
    for j, name in enumerate(cross_section.variables):
        spec = lookup.get(name)
        if spec is None:
            raise ValidationError(f"no variable spec for column {name!r}")
        if spec.transform == "log1p" and name != spec.label:
            col = matrix[:, j]
            bad = np.flatnonzero(col < 0)
            if bad.size:
                i = bad[0]
                raise ValidationError(
                    f"log1p of negative value {col[i]!r} at ({cross_section.countries[i].code}, {name})"
                )
            matrix[:, j] = np.log1p(col)
            labels.append(spec.label)
        else:
            labels.append(name)
    return CrossSection(list(cross_section.countries), labels, matrix)


def transform_panel(panel, specs):
    """Apply transforms cell-wise to an imputed panel (used by the panel regression)."""
    flat = CrossSection(
        [c for c in panel.countries for _ in panel.years],
        list(panel.variables),
        panel.values.reshape(-1, len(panel.variables)),
    )
    out = apply_transforms(flat, specs)
    return Panel(list(panel.countries), list(panel.years), out.variables,
                 out.matrix.reshape(panel.values.shape), dict(panel.excluded))


def describe(cross_section):
    m = cross_section.matrix
    if m.size == 0:
        raise ValidationError("cannot describe an empty cross-section")
    n = m.shape[0]
    sd = m.std(axis=0, ddof=1) if n > 1 else np.zeros(m.shape[1])
    return DescriptiveTable(
        list(cross_section.variables),
        np.full(m.shape[1], n),
        m.mean(axis=0),
        sd,
        m.min(axis=0),
        m.max(axis=0),
    )


def restrict_panel(panel, codes):
    keep = set(codes)
    idx = [i for i, c in enumerate(panel.countries) if c.code in keep]
    return replace(panel, countries=[panel.countries[i] for i in idx], values=panel.values[idx])
