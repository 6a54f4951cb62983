"""Sweep the rate-distortion function and compare with the closed form.

For the binary model with symmetric three-point noise the curve is known
exactly: R(d_s) = ln 2 - h(d_s - Var[W]) with h the natural-log binary
entropy, and the optimal multiplier is ln((1-d)/d) at d = d_s - Var[W].
The solver knows none of this; it alternates between the reproduction
marginal and the tilted kernel and bisects the multiplier.  The sweep
prints both values side by side.
"""

import math

from remoterd import model_from_dict, rd_curve

from surrogate_model import MODEL


def closed_form(d_s):
    d = d_s - 0.125
    h = -d * math.log(d) - (1 - d) * math.log(1 - d)
    return math.log(2) - h, math.log((1 - d) / d)


def main():
    model = model_from_dict(MODEL)
    grid = [0.15 + 0.05 * i for i in range(10)]
    curve = rd_curve(model, grid)
    print(f"{'d_s':>6} {'rate (solver)':>15} {'rate (closed)':>15} "
          f"{'|diff|':>9}")
    worst = 0.0
    for d_s, rate, lam in zip(curve.d_s, curve.rate_nats, curve.lambda_s):
        want_rate, want_lam = closed_form(d_s)
        gap = abs(rate - want_rate)
        worst = max(worst, gap, abs(lam - want_lam))
        print(f"{d_s:6.2f} {rate:15.10f} {want_rate:15.10f} {gap:9.1e}")
    print(f"worst deviation over rates and multipliers: {worst:.2e}")


if __name__ == "__main__":
    main()
