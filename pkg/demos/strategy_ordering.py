"""
Strategy ordering on the heterogeneous ring
===========================================

Sweeps ten seeds over all four worker-selection strategies on the 12-node
ring with mixed capable/flimsy workers. The recency heuristic keeps sending
work to whoever shouted last, random selection ignores capability ratings,
and both pay for it; spreading stays within a few percent of always picking
the best-rated worker.
"""

from statistics import fmean

from carryflow import Strategy, run_suite, summarize
from carryflow.cli import resolve_scenario

config = resolve_scenario("ring-heterogeneous")
seeds = range(1, 11)
suite = run_suite(config, seeds, [Strategy.BEST, Strategy.SPREAD,
                                  Strategy.RANDOM, Strategy.RECENT])

# mean per-task time split, and the total a client actually waits on tasks
summary = summarize(suite.reports)
print(f"{'strategy':<8} {'runtime':>8} {'transmit':>9} {'execute':>8} "
      f"{'total':>8}  n")
for strategy in ("best", "spread", "random", "recent"):
    row = summary[strategy]
    total = fmean([w.total_s for r in suite.reports
                   if r.strategy == strategy
                   for w in r.workflows if w.status == "succeeded"])
    print(f"{strategy:<8} {row['mean_runtime_s']:>8.2f} "
          f"{row['mean_transmission_s']:>9.2f} "
          f"{row['mean_execution_s']:>8.2f} {total:>8.2f}  "
          f"{row['workflows']:.0f}")

best = fmean([w.total_s for r in suite.reports if r.strategy == "best"
              for w in r.workflows if w.status == "succeeded"])
spread = fmean([w.total_s for r in suite.reports if r.strategy == "spread"
                for w in r.workflows if w.status == "succeeded"])
print(f"\nspread stays within {abs(spread - best) / best:.1%} of best")
