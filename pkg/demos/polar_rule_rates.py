"""Error of the polar trapezoidal rule on a smooth cut-off times trigonometric polynomials.

The cut-off radius shrinks like h^(1/3); the fitted orders should be close
to 4 - 3 * (1/3) = 3 or better.

Run:  python3 demos/polar_rule_rates.py
"""

from nystrom3d.harness import ExperimentConfig, run_quadtest


def main():
    report = run_quadtest(ExperimentConfig(N=(32, 64, 128)))
    print(report.to_csv())
    meta = report.metadata
    print("fitted orders: e_(2,1) %.2f, random %.2f, constant %.2f"
          % (meta["order_mode"], meta["order_random"], meta["order_one"]))
    print("bound ratio spread (max/min): %.2f" % meta["ratio_spread"])


if __name__ == "__main__":
    main()
