"""How the noise-induced corrector approaches its large-N limit.

Prints the corrector at xi = (1, 0) for a few noise cutoffs N and compares it
with the limiting dissipation -nu |xi|^(2+2a). Runs in a second or two.
"""

import numpy as np

from ptnoise.noise import (NoiseParams, build_noise_ensemble, corrector_exponent,
                           corrector_limit, corrector_scalar)

xi = np.array([1, 0])
for a in (-0.5, 0.25):
    print(f"a = {a}")
    for N in (4, 8, 16, 32, 64):
        p = NoiseParams(d=2, a=a, b=0.0, gamma=0.0, nu=1.0, N=N)
        value = corrector_scalar(build_noise_ensemble(p), xi)
        limit = -corrector_limit(p, "scalar") * float(xi @ xi) ** (1 + corrector_exponent(p, "scalar"))
        print(f"  N={N:3d}  corrector={value:+.6f}  limit={limit:+.6f}  "
              f"relative gap={abs(value - limit) / abs(limit):.2e}")
