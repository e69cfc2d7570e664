"""Planted-rule synthetic datasets for end-to-end checks.

The generator plants a 2-hop relation chain: for each positive pair the
background holds (h, first, mid) and (mid, second, tail), and the target
relation holds exactly for those (h, tail) pairs. Middles are unique per
pair and distractor edges use separate relations, so no accidental chain
can make any other pair positive. Task files carry the target triples with
per-query candidate lists drawn from provably-negative entities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, UsageError
from .tasks import EpisodeRng, write_task_file


@dataclass
class ChainSpec:
    """A 2-hop rule: (h, first, e) and (e, second, t) imply (h, target, t)."""
    first: str = "requires"
    second: str = "works_in"
    target: str = "implied_by_chain"
    distractor_relations: tuple[str, ...] = ("colleague_of", "near")

    @classmethod
    def parse(cls, text: str) -> "ChainSpec":
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 2 or not all(parts):
            raise UsageError(f"chain spec must name two relations 'first,second', got {text!r}")
        return cls(first=parts[0], second=parts[1])


@dataclass
class SynthSizes:
    entities: int = 60
    pairs: int = 20
    distractors: int = 40
    n_cand: int = 10
    K: int = 3
    train_pairs: int = 12
    valid_pairs: int = 4

    def validate(self):
        if self.entities < 3 * self.pairs:
            raise DataError(f"need >= {3 * self.pairs} entities for {self.pairs} "
                            f"disjoint chains, got {self.entities}")
        if self.distractors < 0 or self.pairs < 2:
            raise DataError("degenerate sizes: pairs >= 2 and distractors >= 0 required")
        test_pairs = self.pairs - self.train_pairs - self.valid_pairs
        for name, count in (("train", self.train_pairs), ("valid", self.valid_pairs),
                            ("test", test_pairs)):
            if count < self.K + 1:
                raise DataError(f"{name} split needs at least K+1={self.K + 1} pairs, has {count}")
        if self.n_cand < 1:
            raise DataError("need at least one candidate per query")


@dataclass
class PlantedBundle:
    bg_triples: list[tuple[str, str, str]]
    chains: list[tuple[str, str, str]]          # (head, mid, tail) per positive pair
    splits: dict[str, list[tuple[str, str]]]    # split -> [(head, tail)]
    spec: ChainSpec
    sizes: SynthSizes
    candidates: dict[str, list[list[str]]] = field(default_factory=dict)


def generate_planted(spec: ChainSpec, sizes: SynthSizes, seed: int) -> PlantedBundle:
    sizes.validate()
    rng = EpisodeRng(seed, (71,))
    names = [f"e{i:03d}" for i in range(sizes.entities)]
    shuffled = rng.shuffle(names)
    chains = []
    for i in range(sizes.pairs):
        chains.append((shuffled[3 * i], shuffled[3 * i + 1], shuffled[3 * i + 2]))

    bg: list[tuple[str, str, str]] = []
    for h, mid, t in chains:
        bg.append((h, spec.first, mid))
        bg.append((mid, spec.second, t))
    seen = set(bg)
    d_rng = rng.child(1)
    guard = 0
    while len(bg) < 2 * sizes.pairs + sizes.distractors:
        a, b = d_rng.sample(names, 2)
        rel = d_rng.choice(list(spec.distractor_relations))
        edge = (a, rel, b)
        guard += 1
        if guard > 100 * sizes.distractors + 1000:
            raise DataError("could not place the requested distractor edges")
        if edge in seen:
            continue
        seen.add(edge)
        bg.append(edge)

    order = rng.child(2).shuffle(list(range(sizes.pairs)))
    train = order[:sizes.train_pairs]
    valid = order[sizes.train_pairs:sizes.train_pairs + sizes.valid_pairs]
    test = order[sizes.train_pairs + sizes.valid_pairs:]
    splits = {name: [(chains[i][0], chains[i][2]) for i in idx]
              for name, idx in (("train", train), ("valid", valid), ("test", test))}

    chain_tail = {h: t for h, _, t in chains}
    cand_rng = rng.child(3)
    candidates: dict[str, list[list[str]]] = {}
    for split in ("valid", "test"):
        rows = []
        for qi, (h, t) in enumerate(splits[split][sizes.K:]):
            # the head itself is excluded: the (h, h) pair encloses the full
            # k-ball around h, chain included, so it is not a usable negative
            pool = [e for e in names if e not in (t, h) and chain_tail.get(h) != e]
            if len(pool) < sizes.n_cand:
                raise DataError("entity set too small for the candidate count")
            rows.append(sorted(cand_rng.child(qi).sample(pool, sizes.n_cand)))
        candidates[split] = rows
    return PlantedBundle(bg, chains, splits, spec, sizes, candidates)


def write_bundle(bundle: PlantedBundle, out_dir) -> Path:
    out = Path(out_dir)
    (out / "tasks").mkdir(parents=True, exist_ok=True)
    with open(out / "bg.tsv", "w", encoding="utf-8") as fh:
        for h, r, t in bundle.bg_triples:
            fh.write(f"{h}\t{r}\t{t}\n")
    target = bundle.spec.target
    for split, pairs in bundle.splits.items():
        triples = [[h, target, t] for h, t in pairs]
        record = {"relation": target,
                  "support": triples[:bundle.sizes.K],
                  "queries": triples[bundle.sizes.K:]}
        if split in bundle.candidates:
            record["candidates"] = bundle.candidates[split]
        write_task_file(out / "tasks" / f"{split}.json", [record])
    return out
