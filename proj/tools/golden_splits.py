#!/usr/bin/env python3
"""Reference implementation of preprocessing and the per-user 8:1:1 split.

Writes the 500-interaction fixture and the golden split files that the
acceptance test compares against. Shares no code with the C++ library: the
random stream is a from-scratch mt19937_64.

    python3 tools/golden_splits.py fixture tests/data/fixture_500.tsv
    python3 tools/golden_splits.py splits tests/data/fixture_500.tsv tests/data/golden
"""

import random
import sys
from pathlib import Path

SEEDS = (9, 672, 5368, 12784, 2023)
MASK64 = (1 << 64) - 1


class MT19937_64:
    N, M = 312, 156
    MATRIX_A = 0xB5026F5AA96619E9
    UPPER, LOWER = 0xFFFFFFFF80000000, 0x7FFFFFFF

    def __init__(self, seed):
        self.mt = [seed & MASK64]
        for i in range(1, self.N):
            prev = self.mt[-1]
            self.mt.append((6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK64)
        self.index = self.N

    def _twist(self):
        mt = self.mt
        for i in range(self.N):
            x = (mt[i] & self.UPPER) | (mt[(i + 1) % self.N] & self.LOWER)
            xa = x >> 1
            if x & 1:
                xa ^= self.MATRIX_A
            mt[i] = mt[(i + self.M) % self.N] ^ xa
        self.index = 0

    def next(self):
        if self.index >= self.N:
            self._twist()
        y = self.mt[self.index]
        self.index += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & MASK64


def uniform_index(rng, n):
    limit = MASK64 - MASK64 % n
    x = rng.next()
    while x >= limit:
        x = rng.next()
    return x % n


def split_counts(n):
    test = min((n + 9) // 10, n - 1)
    valid = min(n // 10, n - 1 - test)
    return n - test - valid, valid, test


def read_interactions(path):
    users, items, records = {}, {}, []
    for line in Path(path).read_bytes().decode().splitlines():
        if not line:
            continue
        fields = line.split("\t")
        u = users.setdefault(fields[0], len(users))
        i = items.setdefault(fields[1], len(items))
        records.append((u, i, float(fields[2])))
    return list(users), list(items), records


def preprocess(records, min_items=4):
    pairs = sorted({(u, i) for u, i, r in records if 1.0 <= r <= 5.0})
    count = {}
    for u, _ in pairs:
        count[u] = count.get(u, 0) + 1
    pairs = [(u, i) for u, i in pairs if count[u] >= min_items]
    user_origin = sorted({u for u, _ in pairs})
    item_origin = sorted({i for _, i in pairs})
    uidx = {raw: k for k, raw in enumerate(user_origin)}
    iidx = {raw: k for k, raw in enumerate(item_origin)}
    return [(uidx[u], iidx[i]) for u, i in pairs], user_origin, item_origin


def split(pairs, n_users, seed):
    rng = MT19937_64(seed)
    by_user = [[] for _ in range(n_users)]
    for u, i in pairs:
        by_user[u].append(i)
    parts = {"train": [], "valid": [], "test": []}
    for u in range(n_users):
        lst = sorted(by_user[u])
        for k in range(len(lst), 1, -1):
            j = uniform_index(rng, k)
            lst[k - 1], lst[j] = lst[j], lst[k - 1]
        _, valid, test = split_counts(len(lst))
        for t, item in enumerate(lst):
            phase = "test" if t < test else ("valid" if t < test + valid else "train")
            parts[phase].append((u, item))
    return {k: sorted(v) for k, v in parts.items()}


def write_fixture(path):
    # 45 users over 60 items with skewed popularity, so the file has repeated
    # pairs and users that fall below the four-item threshold.
    rng = random.Random(20240501)
    lines = []
    while len(lines) < 500:
        u = rng.randrange(45)
        i = int(abs(rng.gauss(0, 20))) % 60 if u % 3 else rng.randrange(60)
        rating = rng.choice(["1", "2", "3", "4", "5", "4.5", "3.0"])
        stamp = str(1_600_000_000 + len(lines) * 37)
        lines.append(f"user_{u:03d}\titem_{i:03d}\t{rating}\t{stamp}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_splits(fixture, out_dir):
    user_ids, item_ids, records = read_interactions(fixture)
    pairs, user_origin, item_origin = preprocess(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in SEEDS:
        parts = split(pairs, len(user_origin), seed)
        text = "".join(
            f"{phase}\t{user_ids[user_origin[u]]}\t{item_ids[item_origin[i]]}\n"
            for phase in ("train", "valid", "test")
            for u, i in parts[phase]
        )
        (out / f"split_{seed}.tsv").write_text(text)


def self_check():
    rng = MT19937_64(5489)
    for _ in range(9999):
        rng.next()
    assert rng.next() == 9981545732273789042, "mt19937_64 reference value mismatch"


if __name__ == "__main__":
    self_check()
    if len(sys.argv) == 3 and sys.argv[1] == "fixture":
        write_fixture(sys.argv[2])
    elif len(sys.argv) == 4 and sys.argv[1] == "splits":
        write_splits(sys.argv[2], sys.argv[3])
    else:
        sys.exit(__doc__)
