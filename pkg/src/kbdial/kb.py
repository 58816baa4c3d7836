"""Entity-centric knowledge base: a table of entities with missing cells.

Each column ("slot") has a vocabulary of observed values, per-value counts and
a count-proportional prior. Cells are stored as integer ids into the slot
vocabulary, with ``MISSING`` marking unknown cells. A table generated
synthetically also keeps the pre-masking ground truth so a simulated user can
know the value of a cell the agent cannot see.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import IO, TYPE_CHECKING, Iterable

import numpy as np

from .text import normalize_value

if TYPE_CHECKING:  # pragma: no cover - typing only
    from .beliefs import BeliefState

MISSING = -1

#: Default header cell that is read back as a missing value.
DEFAULT_MISSING_TOKEN = "X"

#: Reserved CSV column holding entity display names (not a slot).
NAME_COLUMN = "name"

# Default slot layout for generated tables, with per-slot vocabulary sizes
# expressed as a fraction of the configured cap. The fractions mirror the
# unequal spread seen in real movie tables (people slots large, year small).
_DEFAULT_SLOTS = (
    ("actor", 0.75),
    ("director", 0.75),
    ("mpaa_rating", 0.99),
    ("critic_rating", 1.0),
    ("genre", 0.31),
    ("release_year", 0.15),
)

_FIRST_NAMES = (
    "alan bella carl dora edwin farah gino harriet ivan june karim lena marco "
    "nadia oscar priya quinn rosa stefan tina ugo vera wendell ximena yusuf zelda "
    "arlo bree colin dot"
).split()

_LAST_NAMES = (
    "abbott blake cortez dunn ellison fry gupta hale ives jang kato lund moreau "
    "novak obrien pike quist reyes sato thorne ueda vance walsh xiong yates zhu "
    "adler boone crane drake"
).split()

_GENRE_WORDS = (
    "comedy drama thriller horror romance western musical documentary mystery "
    "fantasy adventure crime noir satire biopic animation war sport heist epic "
    "parody melodrama surreal pulp arthouse"
).split()

_GENRE_MODS = "dark french silent teen retro cosmic rural gothic indie pastel".split()

_TITLE_WORDS = (
    "winter harbor echo crown ember garden shadow meridian lantern orchid tides "
    "canyon velvet compass atlas mirror sparrow granite willow comet harvest "
    "saffron ledger monsoon quartz ribbon timber violet anchor bazaar cinder "
    "dusk fable glacier horizon island jubilee keepsake labyrinth meadow nocturne"
).split()


@dataclass(frozen=True)
class KbSplitSpec:
    """Shape parameters for a synthetic table."""

    n_rows: int
    n_slots: int
    max_vocab: int
    missing_fraction: float
    seed: int

    def __post_init__(self) -> None:
        if self.n_rows < 1:
            raise ValueError("n_rows must be positive")
        if self.n_slots < 1:
            raise ValueError("n_slots must be positive")
        if self.max_vocab < 2:
            raise ValueError("max_vocab must be at least 2")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")


class KbTable:
    """Immutable-by-convention entity table plus per-slot statistics.

    Attributes
    ----------
    slots : tuple of slot names (column header order).
    display_names : human-readable slot phrases used in utterances.
    entity_names : display name per row.
    value_ids : (N, M) int array of vocabulary ids, ``MISSING`` for unknown.
    truth_ids : (N, M) int array with pre-masking values where available;
        equals ``value_ids`` for tables without a separate ground truth.
    vocabs : per-slot tuple of value strings.
    counts : per-slot array of observed value counts.
    priors : per-slot count-proportional prior over the vocabulary.
    """

    def __init__(self, slots, vocabs, value_ids, entity_names=None,
                 truth_ids=None, display_names=None):
        self.slots = tuple(slots)
        self.vocabs = tuple(tuple(v) for v in vocabs)
        ids = np.asarray(value_ids, dtype=np.int64)
        if ids.ndim != 2 or ids.shape[1] != len(self.slots):
            raise ValueError("value_ids must have one column per slot")
        if ids.shape[0] == 0:
            raise ValueError("table has no rows")
        self.value_ids = ids
        self.value_ids.setflags(write=False)
        n = ids.shape[0]
        if entity_names is None:
            entity_names = tuple(f"entity-{i}" for i in range(n))
        self.entity_names = tuple(entity_names)
        if len(self.entity_names) != n:
            raise ValueError("one entity name per row required")
        if truth_ids is None:
            self.truth_ids = self.value_ids
        else:
            self.truth_ids = np.asarray(truth_ids, dtype=np.int64)
            self.truth_ids.setflags(write=False)
        if display_names is None:
            display_names = tuple(s.replace("_", " ") for s in self.slots)
        self.display_names = tuple(display_names)

        self.counts = []
        self.priors = []
        for j, vocab in enumerate(self.vocabs):
            col = ids[:, j]
            observed = col[col != MISSING]
            if observed.size and (observed.min() < 0 or observed.max() >= len(vocab)):
                raise ValueError(f"slot {j} has a value id outside its vocabulary")
            cnt = np.bincount(observed, minlength=len(vocab)).astype(np.float64)
            self.counts.append(cnt)
            total = cnt.sum()
            self.priors.append(cnt / total if total > 0 else cnt)
        self.missing_counts = (ids == MISSING).sum(axis=0).astype(np.int64)
        self._lookup_cache: dict[int, object] = {}

    # -- basic shape ---------------------------------------------------------

    @property
    def n_rows(self) -> int:
        return self.value_ids.shape[0]

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def vocab_size(self, j: int) -> int:
        return len(self.vocabs[j])

    def value_string(self, j: int, vid: int) -> str:
        return self.vocabs[j][vid]

    def value_id(self, j: int, value: str) -> int | None:
        value = normalize_value(value)
        try:
            return self._vocab_index(j)[value]
        except KeyError:
            return None

    def _vocab_index(self, j: int) -> dict[str, int]:
        key = ("vidx", j)
        if key not in self._lookup_cache:
            self._lookup_cache[key] = {v: i for i, v in enumerate(self.vocabs[j])}
        return self._lookup_cache[key]  # type: ignore[return-value]

    # -- cached arrays used by the soft posterior ----------------------------

    def missing_mask(self, j: int) -> np.ndarray:
        key = ("miss", j)
        if key not in self._lookup_cache:
            m = self.value_ids[:, j] == MISSING
            m.setflags(write=False)
            self._lookup_cache[key] = m
        return self._lookup_cache[key]  # type: ignore[return-value]

    def row_coefficients(self, j: int) -> np.ndarray:
        """Per-row factor (1 - |M_j|/N) / N_j(v_i) for observed cells, 0 elsewhere."""
        key = ("coef", j)
        if key not in self._lookup_cache:
            col = self.value_ids[:, j]
            coef = np.zeros(self.n_rows, dtype=np.float64)
            obs = col != MISSING
            if obs.any():
                frac = 1.0 - self.missing_counts[j] / self.n_rows
                coef[obs] = frac / self.counts[j][col[obs]]
            coef.setflags(write=False)
            self._lookup_cache[key] = coef
        return self._lookup_cache[key]  # type: ignore[return-value]

    def scatter_matrix(self, j: int) -> np.ndarray:
        """(N, V_j) matrix S with S[i, v_i] = row coefficient, for graph matmuls."""
        key = ("scatter", j)
        if key not in self._lookup_cache:
            s = np.zeros((self.n_rows, self.vocab_size(j)), dtype=np.float64)
            col = self.value_ids[:, j]
            obs = col != MISSING
            s[np.nonzero(obs)[0], col[obs]] = self.row_coefficients(j)[obs]
            s.setflags(write=False)
            self._lookup_cache[key] = s
        return self._lookup_cache[key]  # type: ignore[return-value]

    def value_indicator(self, j: int) -> np.ndarray:
        """(V_j, N) 0/1 matrix mapping rows to their observed value."""
        key = ("onehot", j)
        if key not in self._lookup_cache:
            a = np.zeros((self.vocab_size(j), self.n_rows), dtype=np.float64)
            col = self.value_ids[:, j]
            obs = col != MISSING
            a[col[obs], np.nonzero(obs)[0]] = 1.0
            a.setflags(write=False)
            self._lookup_cache[key] = a
        return self._lookup_cache[key]  # type: ignore[return-value]

    # -- serialization -------------------------------------------------------

    def to_csv(self, destination: str | IO[str] | None = None,
               missing_token: str = DEFAULT_MISSING_TOKEN,
               include_names: bool = True) -> str | None:
        """Write the observed table as CSV; returns the text when no target given."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        header = ([NAME_COLUMN] if include_names else []) + list(self.slots)
        writer.writerow(header)
        for i in range(self.n_rows):
            row = [self.entity_names[i]] if include_names else []
            for j in range(self.n_slots):
                vid = self.value_ids[i, j]
                row.append(missing_token if vid == MISSING else self.vocabs[j][vid])
            writer.writerow(row)
        text = buf.getvalue()
        if destination is None:
            return text
        if isinstance(destination, str):
            with open(destination, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            destination.write(text)
        return None


def load_csv(source: str | IO[str],
             missing_token: str = DEFAULT_MISSING_TOKEN,
             display_names: dict[str, str] | None = None) -> KbTable:
    """Read a KB from CSV text, a path, or an open file.

    The header names the slots; a leading ``name`` column is treated as entity
    display names. Cells equal to ``missing_token`` (case-insensitive) become
    missing. Ragged rows and empty tables raise ``ValueError``.
    """
    if isinstance(source, str):
        if "\n" in source or "," in source:
            fh: IO[str] = io.StringIO(source)
        else:
            fh = open(source, "r", encoding="utf-8", newline="")
    else:
        fh = source
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV: no header row") from None
        header = [h.strip() for h in header]
        has_names = bool(header) and header[0].strip().lower() == NAME_COLUMN
        slots = header[1:] if has_names else header
        if not slots:
            raise ValueError("CSV header names no slots")

        names: list[str] = []
        raw_rows: list[list[str]] = []
        missing_norm = missing_token.strip().lower()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            if has_names:
                names.append(row[0].strip())
                row = row[1:]
            raw_rows.append([normalize_value(c) for c in row])
        if not raw_rows:
            raise ValueError("CSV has a header but no data rows")

        vocabs: list[list[str]] = []
        columns: list[np.ndarray] = []
        for j in range(len(slots)):
            seen: dict[str, int] = {}
            col = np.empty(len(raw_rows), dtype=np.int64)
            for i, row in enumerate(raw_rows):
                cell = row[j]
                if not cell or cell == missing_norm:
                    col[i] = MISSING
                else:
                    col[i] = seen.setdefault(cell, len(seen))
            vocabs.append(list(seen))
            columns.append(col)
        value_ids = np.stack(columns, axis=1)
        disp = None
        if display_names:
            disp = tuple(display_names.get(s, s.replace("_", " ")) for s in slots)
        return KbTable(slots, vocabs, value_ids,
                       entity_names=names if has_names else None,
                       display_names=disp)
    finally:
        if fh is not source and isinstance(source, str):
            fh.close()


def _slot_layout(spec: KbSplitSpec) -> list[tuple[str, int]]:
    layout = []
    for k in range(spec.n_slots):
        if spec.n_slots == len(_DEFAULT_SLOTS):
            name, frac = _DEFAULT_SLOTS[k]
            size = max(2, round(spec.max_vocab * frac))
        else:
            name, size = f"slot_{k}", spec.max_vocab
        layout.append((name, min(size, spec.max_vocab)))
    # Guarantee at least one slot actually hits the cap.
    if all(size < spec.max_vocab for _, size in layout):
        layout[0] = (layout[0][0], spec.max_vocab)
    return layout


def _value_pool(slot: str, size: int, rng: np.random.Generator) -> list[str]:
    """Deterministic pool of ``size`` distinct plausible value strings."""
    if slot in ("actor", "director"):
        combos = [f"{a} {b}" for a in _FIRST_NAMES for b in _LAST_NAMES]
    elif slot == "mpaa_rating":
        combos = ["g", "pg", "pg-13", "r", "nc-17", "unrated", "tv-ma", "tv-14",
                  "approved", "passed"]
        combos += [f"cert-{k}" for k in range(max(0, size - len(combos)))]
    elif slot == "critic_rating":
        combos = [f"{k / 10:.1f}" for k in range(10, 100)]
    elif slot == "genre":
        combos = list(_GENRE_WORDS)
        combos += [f"{m} {g}" for m in _GENRE_MODS for g in _GENRE_WORDS]
    elif slot == "release_year":
        combos = [str(y) for y in range(1920, 2026)]
    else:
        combos = [f"{slot}-v{k}" for k in range(size)]
    if len(combos) < size:
        combos += [f"{slot}-x{k}" for k in range(size - len(combos))]
    pick = rng.permutation(len(combos))[:size]
    return [combos[i] for i in pick]


def _entity_names(n: int, rng: np.random.Generator) -> list[str]:
    patterns = ("the {a} {b}", "{a} of {b}", "{a} and the {b}")
    names: list[str] = []
    seen: set[str] = set()
    while len(names) < n:
        a, b = rng.choice(_TITLE_WORDS, size=2, replace=False)
        name = str(rng.choice(patterns)).format(a=a, b=b)
        if name in seen:
            name = f"{name} {len(names)}"
        seen.add(name)
        names.append(name)
    return names


#: Zipf exponent for synthetic value frequencies. 0 is uniform; 1 is the
#: classic heavy skew. Moderate skew keeps dialogues heterogeneous (rare
#: values pin the entity quickly, common ones barely narrow it) without
#: blowing up the clusters of rows that are indistinguishable on their
#: observed cells, which would cap every agent's achievable success rate.
ZIPF_EXPONENT = 0.3


def generate_synthetic(spec: KbSplitSpec) -> KbTable:
    """Sample a table with Zipf-skewed values, then mask a fixed missing count.

    Value frequencies within each slot follow a Zipf law (a handful of very
    common values plus a long tail), like real catalogue data. The skew is
    what makes dialogues heterogeneous: a rare value pins the entity almost
    immediately while a common one barely narrows it down.

    Exactly ``floor(missing_fraction * n_rows)`` cells per slot are masked.
    The unmasked matrix is retained as ground truth; ids are remapped onto the
    observed vocabulary (a truth value that vanished from the observed column
    maps to ``MISSING`` and is treated as unknowable by the simulator).
    """
    rng = np.random.default_rng(spec.seed)
    layout = _slot_layout(spec)
    n = spec.n_rows
    n_masked = math.floor(spec.missing_fraction * n)

    vocabs: list[list[str]] = []
    observed_cols: list[np.ndarray] = []
    truth_cols: list[np.ndarray] = []
    for slot, size in layout:
        pool = _value_pool(slot, size, rng)
        weights = np.arange(1, size + 1) ** -ZIPF_EXPONENT
        truth = rng.choice(size, size=n, p=weights / weights.sum())
        observed = truth.copy()
        if n_masked:
            observed[rng.choice(n, size=n_masked, replace=False)] = MISSING
        kept = np.unique(observed[observed != MISSING])
        remap = np.full(size, MISSING, dtype=np.int64)
        remap[kept] = np.arange(kept.size)
        vocabs.append([pool[v] for v in kept])
        observed_cols.append(np.where(observed == MISSING, MISSING, remap[truth]))
        truth_cols.append(remap[truth])

    return KbTable(
        [name for name, _ in layout],
        vocabs,
        np.stack(observed_cols, axis=1),
        entity_names=_entity_names(n, rng),
        truth_ids=np.stack(truth_cols, axis=1),
    )


#: Named synthetic splits matching the published movie-table statistics
#: (rows, slots, largest per-slot vocabulary, fraction of cells masked).
TABLE_SPLITS: dict[str, tuple[int, int, int, float]] = {
    "small": (277, 6, 17, 0.20),
    "medium": (428, 6, 68, 0.20),
    "large": (857, 6, 101, 0.20),
    "xlarge": (3523, 6, 251, 0.20),
}


def split_spec(name: str, seed: int = 1) -> KbSplitSpec:
    """Spec for a named split, e.g. ``small`` or ``medium@7`` (seed suffix)."""
    base, _, suffix = name.partition("@")
    if suffix:
        seed = int(suffix)
    try:
        rows, slots, vocab, missing = TABLE_SPLITS[base.lower()]
    except KeyError:
        raise ValueError(f"unknown split {base!r}; "
                         f"choose from {sorted(TABLE_SPLITS)}") from None
    return KbSplitSpec(rows, slots, vocab, missing, seed)


def load_kb(path: str) -> KbTable:
    """Load a KB from a ``.csv`` table, a ``.json`` split spec, or a named
    split such as ``small`` / ``medium@7`` (``@n`` picks the generator seed).
    """
    base = path.partition("@")[0].lower()
    if base in TABLE_SPLITS or "@" in path:
        return generate_synthetic(split_spec(path))
    if path.endswith(".json"):
        import json

        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
        spec = KbSplitSpec(
            n_rows=int(cfg["n_rows"]),
            n_slots=int(cfg["n_slots"]),
            max_vocab=int(cfg["max_vocab"]),
            missing_fraction=float(cfg["missing_fraction"]),
            seed=int(cfg.get("seed", 0)),
        )
        return generate_synthetic(spec)
    return load_csv(path)


# -- hard lookup -------------------------------------------------------------

#: Result-count bins: 0, 1, 2, 3, 4, or at-least-5 matches.
N_RESULT_BINS = 6


def result_bin(count: int) -> np.ndarray:
    """One-hot encoding of a retrieved-result count."""
    onehot = np.zeros(N_RESULT_BINS, dtype=np.float64)
    onehot[min(count, N_RESULT_BINS - 1)] = 1.0
    return onehot


#: How far a slot's peak belief must rise above its prior's peak before the
#: hard lookup treats the slot as constrained. Keeps prior-shaped (no
#: evidence) beliefs from pinning a query value, whatever the prior's skew.
EVIDENCE_MARGIN = 0.15


def hard_kb_lookup(kb: KbTable, beliefs: "BeliefState") -> tuple[np.ndarray, np.ndarray]:
    """Exact lookup from the most likely value of every constrained slot.

    A slot constrains the query once its peak belief has gained real evidence
    over the prior's peak (``EVIDENCE_MARGIN``) and the user has not said they
    don't know it; a freshly reset belief never constrains anything. A row
    matches when each constrained cell equals the query value or is missing.
    Returns the matching row indices and the result-count one-hot.
    """
    match = np.ones(kb.n_rows, dtype=bool)
    for j in range(kb.n_slots):
        if beliefs.know[j] <= 0.5 or kb.vocab_size(j) == 0:
            continue
        peak = float(beliefs.dists[j].max())
        if peak <= float(kb.priors[j].max()) + EVIDENCE_MARGIN:
            continue
        want = int(np.argmax(beliefs.dists[j]))
        col = kb.value_ids[:, j]
        match &= (col == want) | (col == MISSING)
    rows = np.nonzero(match)[0]
    return rows, result_bin(len(rows))
