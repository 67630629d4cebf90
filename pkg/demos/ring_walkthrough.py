"""
One workflow through the heterogeneous ring
===========================================

Runs the packaged 12-node ring scenario once and walks through the report:
where each workflow ended up, how its time splits into runtime (waiting and
bookkeeping), transmission, and execution, and what the run left behind.
"""

from carryflow import Strategy, run_scenario
from carryflow.cli import resolve_scenario

config = resolve_scenario("ring-heterogeneous")
report = run_scenario(config, seed=1, strategy=Strategy.BEST)

print(f"scenario {report.scenario!r} seed={report.seed} "
      f"strategy={report.strategy}")
print(f"simulated {report.duration_s:.0f} s, "
      f"{len(report.workflows)} workflows\n")

# per-workflow phase split; the return leg back to the client is accounted
# separately so task sums stay comparable across strategies
header = f"{'workflow':<12} {'status':<10} {'runtime':>8} {'transmit':>9} " \
         f"{'execute':>8} {'total':>8}"
print(header)
print("-" * len(header))
for wf in report.workflows:
    print(f"{wf.workflow_id:<12} {wf.status:<10} {wf.runtime_s:>8.2f} "
          f"{wf.transmission_s:>9.2f} {wf.execution_s:>8.2f} "
          f"{wf.total_s:>8.2f}")

# which worker each holder picked for the next task
print("\nselections (caller -> worker): " + ", ".join(
    f"{c}->{w} x{n}" for (c, w), n in sorted(report.selections.items())))

# workers start with 200 E of virtual energy and spend some per execution;
# the client never executes, so anything else below 200 did real work
client = report.workflows[0].client
drained = {addr: 200.0 - energy
           for addr, energy in report.residual_energy.items()
           if addr != client and energy < 200.0}
print("energy spent at: " + ", ".join(
    f"node {addr} ({spent:.0f} E)" for addr, spent in sorted(drained.items())))
