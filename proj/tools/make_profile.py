#!/usr/bin/env python3
"""Writes the reference two-peak OD demand profile (veh/h) for the toy corridor.

The profile is authored: a daytime plateau with a morning peak around 08:00
and an evening peak around 17:30, scaled per OD pair to its peak rate.
Re-run to regenerate data/toy_profile.csv.
"""
import math
import sys

INTERVALS = 288          # 5-minute intervals over 24 h
OD_NAMES = ["O0-X1", "O0-X2", "O0-X3", "O0-D4", "M1-X2", "M1-D4", "M2-X3", "M2-D4", "M3-D4"]
PEAK_VPH = [90, 120, 150, 1440, 90, 150, 90, 150, 180]


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def shape(hour):
    day = 0.12 + 0.38 * sigmoid((hour - 6.0) / 0.7) * sigmoid((22.0 - hour) / 0.9)
    morning = 0.55 * math.exp(-((hour - 8.0) ** 2) / (2 * 0.9 ** 2))
    evening = 0.50 * math.exp(-((hour - 17.5) ** 2) / (2 * 1.1 ** 2))
    return day + morning + evening


def main(path):
    hours = [(t + 0.5) * 24.0 / INTERVALS for t in range(INTERVALS)]
    peak = max(shape(h) for h in hours)
    with open(path, "w", newline="\n") as out:
        out.write("interval," + ",".join(OD_NAMES) + "\n")
        for t, h in enumerate(hours):
            s = shape(h) / peak
            out.write(str(t) + "," + ",".join(f"{p * s:.1f}" for p in PEAK_VPH) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/toy_profile.csv")
