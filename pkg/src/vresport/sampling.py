"""Calendar-stratified (Latin hypercube style) selection of time steps."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_STRATA = (None, 12, 4)


@dataclass(frozen=True)
class SamplePlan:
    indices: np.ndarray
    seed: int
    strata_spec: tuple

    def __post_init__(self):
        idx = np.array(self.indices, dtype=np.int64)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def M(self) -> int:
        return int(self.indices.size)

    def to_csv(self) -> str:
        buf = io.StringIO()
        spec = ",".join("all" if s is None else str(s) for s in self.strata_spec)
        buf.write(f"# seed={self.seed} strata={spec}\n")
        buf.write("position\n")
        for i in self.indices:
            buf.write(f"{int(i)}\n")
        return buf.getvalue()

    def save(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "SamplePlan":
        with open(path) as fh:
            head = fh.readline().strip()
            if not head.startswith("#"):
                raise ValidationError(f"{path}: missing plan header comment")
            fields = dict(tok.split("=", 1) for tok in head[1:].split())
            if fh.readline().strip() != "position":
                raise ValidationError(f"{path}: expected 'position' column")
            idx = [int(line) for line in fh if line.strip()]
        spec = tuple(None if s == "all" else int(s) for s in fields["strata"].split(","))
        return cls(indices=np.array(idx), seed=int(fields["seed"]), strata_spec=spec)


def _bins(values, n_bins, span=None):
    if n_bins is None:
        _, inv = np.unique(values, return_inverse=True)
        return inv
    if span is not None:
        lo, width = span
        return ((values - lo) * n_bins) // width
    uniq = np.unique(values)
    groups = np.array_split(uniq, min(n_bins, uniq.size))
    lut = {v: g for g, grp in enumerate(groups) for v in grp}
    return np.array([lut[v] for v in values])


def strata_labels(calendar, strata=DEFAULT_STRATA, return_keys=False):
    """Stratum number per time step from ``(year, month, hour)`` rows.

    ``strata`` gives the number of year, month and hour-of-day bins; ``None``
    for years means one bin per distinct year. Empty cells of the cross
    product do not form strata. With ``return_keys`` the per-stratum
    ``(year, month, hour)`` bin numbers come back too.
    """
    cal = np.asarray(calendar, dtype=int)
    ny, nm, nh = strata
    y = _bins(cal[:, 0], ny)
    m = _bins(cal[:, 1], nm, span=(1, 12)) if nm else np.zeros(len(cal), dtype=int)
    h = _bins(cal[:, 2], nh, span=(0, 24)) if nh else np.zeros(len(cal), dtype=int)
    key = np.column_stack([y, m, h])
    keys, labels = np.unique(key, axis=0, return_inverse=True)
    labels = labels.ravel()
    return (labels, keys) if return_keys else labels


def _spread(candidates, extra, keys, rng):
    """Choose ``extra`` strata so each calendar axis gets the extras evenly.

    Greedy: the next pick is the stratum whose year, month and hour bins
    have received the fewest extras so far; a seeded shuffle breaks ties.
    """
    order = candidates[rng.permutation(candidates.size)]
    used = [dict() for _ in range(keys.shape[1])]
    chosen = []
    free = list(order)
    for _ in range(extra):
        scores = [sum(used[a].get(keys[s, a], 0) for a in range(keys.shape[1])) for s in free]
        s = free.pop(int(np.argmin(scores)))
        for a in range(keys.shape[1]):
            used[a][keys[s, a]] = used[a].get(keys[s, a], 0) + 1
        chosen.append(s)
    return np.array(chosen, dtype=np.int64)


def _balanced_counts(pop, M, rng, keys):
    # water-filling: the highest common level that fits, then one extra
    # draw for ``left`` of the strata that can still take it
    lo, hi = 0, int(pop.max())
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if np.minimum(pop, mid).sum() <= M:
            lo = mid
        else:
            hi = mid - 1
    level = lo
    counts = np.minimum(pop, level).astype(np.int64)
    left = M - int(counts.sum())
    if left:
        counts[_spread(np.flatnonzero(pop > level), left, keys, rng)] += 1
    return counts


def lhs_sample(T: int, calendar, M: int = 3000, seed: int = 0, strata=DEFAULT_STRATA) -> SamplePlan:
    """Pick ``M`` distinct steps spread evenly over calendar strata.

    Each stratum receives ``M // S`` or one more draws; the remainders are
    spread so that years, months and hour blocks also stay within one
    draw of each other where the calendar allows. Strata too small to hold
    their share hand the excess to the others. Draws within a stratum are uniform
    without replacement.
    """
    cal = np.asarray(calendar)
    if cal.shape[0] != T:
        raise ValidationError(f"calendar has {cal.shape[0]} rows, expected {T}")
    if not 1 <= M <= T:
        raise ValidationError(f"sample size M={M} must lie in [1, T={T}]")
    rng = np.random.default_rng(seed)
    labels, keys = strata_labels(cal, strata, return_keys=True)
    S = labels.max() + 1
    members = [np.flatnonzero(labels == s) for s in range(S)]
    pop = np.array([m.size for m in members])
    counts = _balanced_counts(pop, M, rng, keys)
    picked = [rng.choice(members[s], size=counts[s], replace=False) for s in range(S) if counts[s]]
    idx = np.sort(np.concatenate(picked))
    return SamplePlan(indices=idx, seed=int(seed), strata_spec=tuple(strata))
