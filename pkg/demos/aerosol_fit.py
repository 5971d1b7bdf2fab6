"""
Fitting a two-component mixture to particle diameters
=====================================================

Synthetic diameters come from a two-component normal mixture. The five
parameters (mu1, mu2, sigma1, sigma2, lambda) are sampled in three blocks.
We compare posterior intervals from plain Metropolis and the pinball
sampler; they should agree.
"""

from hybridmc.harness.aerosol import run_aerosol_experiment, synth_aerosol
from hybridmc.harness.config import ExperimentConfig

data = synth_aerosol(1000, 0.4, 1.0, 3.0, 0.4, 0.6, seed=4)
print(f"{len(data.diameters)} diameters, mean {data.diameters.mean():.3f}")

cfg = ExperimentConfig.from_dict(
    {
        "algorithms": [{"name": "mha"}, {"name": "ps"}],
        "particles": 10,
        "budget": {"iterations": 1500},
        "burn_in": 500,
        "timing": False,
        "aerosol": {},
    }
)
results = run_aerosol_experiment(cfg, data, write=False)

names = ("mu1", "mu2", "sigma1", "sigma2", "lambda")
truth = (1.0, 3.0, 0.4, 0.6, 0.4)
for label, res in results.items():
    print(f"\n{label}: tau_bar {res.tau_bar:.1f}, ESS {res.ess:.0f}")
    for n, t, m, lo, hi in zip(names, truth, res.means, res.lower, res.upper):
        print(f"  {n:>7} true {t:.2f}  mean {m:.3f}  95% [{lo:.3f}, {hi:.3f}]")
