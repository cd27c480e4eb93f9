#!/usr/bin/env python3
"""Regenerates the bundled sample inputs in data/.

Usage: tools/gen_data.py <path-to-qkd-linkbench> [data-dir]
"""
import math
import pathlib
import random
import subprocess
import sys


def timetags(cli, out, **opts):
    args = [cli, "timetags", "-o", str(out)]
    for k, v in opts.items():
        args += ["--" + k.replace("_", "-"), str(v)]
    subprocess.run(args, check=True)


def saturation_csv(path, seed=11):
    rng = random.Random(seed)
    a, b, r_inf, p_sat = 2.0e3, 2.0e4, 1.0e7, 1.0  # cps, cps/mW, cps, mW
    powers = [0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 1.3, 1.7, 2.0, 2.5, 3.0, 4.0, 5.0, 6.5, 8.0]
    with open(path, "w") as f:
        f.write("# qkd-linkbench v1 saturation: power in mW, rate in counts/s\n")
        f.write("power,rate\n")
        for p in powers:
            rate = a + b * p + r_inf * p / (p + p_sat)
            rate *= 1.0 + 0.003 * rng.gauss(0.0, 1.0)
            f.write(f"{p:.9g},{rate:.9g}\n")


def qber_model(kind, mu, eta_bob, p_dark, e_det, loss_db):
    eta = eta_bob * 10 ** (-loss_db / 10)
    if kind == "sps":
        return (p_dark / 2 + e_det * eta * mu) / (p_dark + eta * mu)
    x = 1 - math.exp(-eta * mu)
    return (p_dark / 2 + e_det * x) / (p_dark + x)


def qber_csv(path, kind, mu, e_det, seed, pulses=1e10):
    # Binomial scatter for a fixed number of sent pulses per loss point.
    rng = random.Random(seed)
    eta_bob, p_dark = 0.24, 2e-6
    with open(path, "w") as f:
        f.write(f"# qkd-linkbench v1 qber: source={kind} mu={mu:g} eta_bob={eta_bob:g}\n")
        f.write("loss_db,qber,weight\n")
        for db in range(0, 31, 3):
            q = qber_model(kind, mu, eta_bob, p_dark, e_det, db)
            eta = eta_bob * 10 ** (-db / 10)
            clicks = ((p_dark + eta * mu) if kind == "sps" else (p_dark + 1 - math.exp(-eta * mu))) * pulses * 0.5
            sigma = math.sqrt(q * (1 - q) / clicks)
            f.write(f"{db},{q + sigma * rng.gauss(0.0, 1.0):.9g},{1 / sigma**2:.9g}\n")


def main():
    cli = sys.argv[1]
    data = pathlib.Path(sys.argv[2] if len(sys.argv) > 2 else pathlib.Path(__file__).resolve().parents[1] / "data")
    data.mkdir(exist_ok=True)
    timetags(cli, data / "g2_pulsed.timetag", mu=0.5, g2=0.02, tau_c_ns=3.6, cycles=1000000, seed=2021)
    timetags(cli, data / "g2_longtime.timetag", mu=0.5, g2=0.02, on_fraction=0.77, tau_trap_ns=1000,
             cycles=1000000, seed=2022)
    saturation_csv(data / "saturation.csv")
    qber_csv(data / "qber_sps.csv", "sps", 0.08, 0.039, seed=3)
    qber_csv(data / "qber_wcp.csv", "wcp", 0.5, 0.008, seed=4)


if __name__ == "__main__":
    main()
