"""Regenerate the committed synthetic cohort fixture in data/cohort42/.

Ten participants, six one-week periods each (42 days), block-randomized in
pairs, generated from the latent model with participant-varying coefficients
and sporadic missing exposure/outcome days.  Deterministic; rerunning
overwrites the same files.
"""

from pathlib import Path

import numpy as np

from nof1iv.io import write_csv
from nof1iv.model import TrialLayout
from nof1iv.simulate import ScenarioSpec, gen_trial

OUT = Path(__file__).resolve().parents[1] / "data" / "cohort42"
N_PARTICIPANTS = 10


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    layout = TrialLayout(periods=6, days_per_period=7)
    root = np.random.SeedSequence(4242)
    for i in range(N_PARTICIPANTS):
        rng = np.random.default_rng(np.random.SeedSequence(4242, spawn_key=(i,)))
        scenario = ScenarioSpec(
            id=f"cohort42-{i}",
            duration=42,
            rho=float(rng.uniform(0.1, 0.4)),
            rho_u=0.3,
            alpha0=float(-0.84 + rng.normal(0.0, 0.15)),
            alpha1=float(0.84 + rng.normal(0.0, 0.15)),
            beta0=float(-1.05 + rng.normal(0.0, 0.15)),
            beta1=float(0.30 + rng.normal(0.0, 0.10)),
        )
        series, _ = gen_trial(scenario, layout, rng, participant_id=f"P{i + 1:02d}")
        # sporadic reporting gaps
        series.x[rng.random(42) < 0.08] = np.nan
        series.y[rng.random(42) < 0.05] = np.nan
        write_csv(series, OUT / f"participant_{i + 1:02d}.csv")
    print(f"wrote {N_PARTICIPANTS} participants to {OUT}")


if __name__ == "__main__":
    main()
