"""Walk through one kingpin removal in built-in case A.

The script runs a single seeded simulation and prints the replacement
timeline: who is orphaned, when the conclave sits, who is put forward and
who ends up holding the vacated role. It then scores the run against the
case's training statements.

Run with ``python demos/kingpin_removal.py [seed]``.
"""

import sys

from ccrm.calibrate import FreeParams
from ccrm.replacement import simulate
from ccrm.scenarios import builtin_case
from ccrm.statements import score_case

# A parameter set in the calibrated region: low capital thresholds and a
# moderate selection temperature.
PARAMS = {"beta": 0.7, "kappa": 0.0, "gamma": 0.2, "tau": 0.03, "psi": 5.7, "phi": 0.65, "zeta": 0.75}

SHOWN = ("intervention", "conclave", "candidacy", "instatement", "fitness", "rejection",
         "disintegration", "agents-removed")


def main(seed: int = 1) -> None:
    case = builtin_case("A")
    theta = FreeParams.from_mapping(PARAMS)
    trace = simulate(case, theta.model_params(), seed=seed)
    print(f"case {case.id}: {len(case.agents)} agents, removal of {case.intervention.target} "
          f"at step {case.intervention.step}, horizon {case.horizon}")

    last_candidates = None
    for ev in trace.events:
        if ev.event_type not in SHOWN:
            continue
        # candidacy repeats daily while the search is open; show changes only
        if ev.event_type == "candidacy":
            if ev.payload["candidates"] == last_candidates:
                continue
            last_candidates = ev.payload["candidates"]
        print(f"  step {ev.step:3d}  {ev.event_type:15s} {ev.payload}")

    stages = [s.value for s in trace.stage_sequence()]
    print("stages:", " -> ".join(stages))

    score = score_case(case.training, trace)
    print(f"training score {float(score.achieved):.2f} / {score.max}, failed {score.failed_count}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
