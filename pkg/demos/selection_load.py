"""
Load distribution across equally capable workers
================================================

On the homogeneous ring every worker rates identically except for distance,
so the client's ranking is the same in every run: nearest neighbors first.
Best then funnels all work to one worker, spread samples the ranking through
a folded normal (favoring the front without starving the rest), and random
ignores the ranking entirely. Selection entropy quantifies the difference.
"""

from collections import Counter

from carryflow import Strategy, run_suite, selection_entropy
from carryflow.cli import resolve_scenario

config = resolve_scenario("ring-homogeneous")
suite = run_suite(config, range(1, 26), [Strategy.BEST, Strategy.SPREAD,
                                         Strategy.RANDOM])


def shares(strategy: str) -> Counter:
    counts: Counter = Counter()
    for report in suite.reports:
        if report.strategy == strategy:
            for (_, worker), n in report.selections.items():
                counts[worker] += n
    return counts


workers = sorted(set().union(*(shares(s) for s in ("best", "spread", "random"))))
print("worker   " + " ".join(f"{w:>5}" for w in workers))
for strategy in ("best", "spread", "random"):
    counts = shares(strategy)
    total = sum(counts.values())
    row = " ".join(f"{counts.get(w, 0) / total:>5.2f}" for w in workers)
    print(f"{strategy:<8} {row}   H={selection_entropy(dict(counts)):.2f}")

print("\nbest concentrates, spread keeps a plurality on the nearest worker,")
print("random flattens the histogram (highest entropy)")
