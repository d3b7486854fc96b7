"""A desk-scale pass through the calibration workflow.

1. Fit the seven free parameters to training cases A-C with SPSA.
2. Score the fitted parameters on the held-out case D.
3. Check which parameters the objective is sensitive to.
4. Compare the fit against randomly drawn parameter sets.

Iteration and run counts are cut far below production settings so the
whole script finishes in a few minutes on one core; expect noisy
answers. Run with ``python demos/calibration_workflow.py [iterations]``.
"""

import sys

from ccrm.analysis import null_baseline, sensitivity_report, validate
from ccrm.calibrate import ModelObjective, SpsaConfig, spsa_optimize
from ccrm.scenarios import builtin_case, builtin_cases

RUNS = 4
SEED = 0


def main(iterations: int = 150) -> None:
    training = builtin_cases("ABC")
    with ModelObjective(training, runs=RUNS, seed=SEED) as f:
        print(f"SPSA: {iterations} iterations, {RUNS} runs per case per evaluation")
        fit = spsa_optimize(f, SpsaConfig(iterations=iterations, runs=RUNS, seed=SEED))
        print("optimum:", {k: round(v, 3) for k, v in fit.theta.as_dict().items()})
        print(f"mean failed training statements per run: {fit.value:.3f}")

        report = validate(fit.theta, [builtin_case("D")], runs=RUNS, seed=SEED, training=training)
        print(f"hold-out case D: {report.fraction:.2f} of the maximum score "
              f"(training {report.training_fraction:.2f})")

        sens = sensitivity_report(f, fit.theta, samples=20, seed=SEED)
        print("global ranking:", " ".join(sens.global_ranking))
        print("local ranking: ", " ".join(sens.local_ranking))

        base = null_baseline(f, fit.theta, models=100, seed=SEED, optimum_value=None)
        print(f"random models at least as good: {base.at_least_as_good} of 100, p = {base.p_value:.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 150)
