"""
Offloading under mobility
=========================

The mobile scenario scatters 30 random-waypoint nodes over 300x300 m with a
50 m radio range, so contacts are short and offers go stale quickly. Workers
also carry little energy. Chasing the most recently heard worker then
concentrates load on whoever happened to pass by, spreading keeps more
workflows inside their deadline. This sprint runs two seeds for the two
extremes; the full five-seed, four-strategy sweep lives in the test suite
(and behind `carryflow suite mobile-sparse`).
"""

from carryflow import Strategy, run_suite, summarize
from carryflow.cli import resolve_scenario

config = resolve_scenario("mobile-sparse")
suite = run_suite(config, [1, 2], [Strategy.SPREAD, Strategy.RECENT])
summary = summarize(suite.reports)

print(f"{'strategy':<8} {'success':>8} {'workflows':>10} {'makespan':>9}")
for strategy in ("spread", "recent"):
    row = summary[strategy]
    print(f"{strategy:<8} {row['success_rate']:>8.2f} "
          f"{row['workflows']:>10.0f} {row['mean_makespan_s']:>8.0f}s")

spread = summary["spread"]["success_rate"]
recent = summary["recent"]["success_rate"]
print(f"\nspread's success rate beats recent's by "
      f"{100 * (spread - recent):.0f} points")
