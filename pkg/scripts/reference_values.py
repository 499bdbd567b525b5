#!/usr/bin/env python3
"""Recompute the closed-form spot values used by the acceptance tests.

Everything here is evaluated with mpmath at 50 significant digits,
independently of the library, and frozen into tests/data/reference_values.json.
Rerun after editing and commit the regenerated file.
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 50

GAMMA1 = mp.mpf("0.01")
GAMMA2 = mp.mpf("0.5")


def main() -> None:
    values = {}

    # Error-based confidence exp(-||err||^2) at a few hand errors.
    values["confidence_unit_error"] = mp.e ** -1
    values["confidence_error_3_4"] = mp.e ** -25  # ||(3,4)||^2 = 25
    values["confidence_error_10px"] = mp.e ** -100

    # Cycle-check terms for a forward (2,0) meeting backward (-2,0):
    # residual 0, magnitudes 4 + 4.
    values["cycle_den_consistent_2_0"] = GAMMA1 * 8 + GAMMA2
    # Forward (5,0) meeting backward (0,0): residual 25, magnitudes 25 + 0.
    values["cycle_num_5_0"] = mp.mpf(25)
    values["cycle_den_5_0"] = GAMMA1 * 25 + GAMMA2
    values["cycle_confidence_5_0"] = mp.e ** (-mp.mpf(25) / (GAMMA1 * 25 + GAMMA2))
    values["cycle_matched_5_0"] = mp.mpf(25) < GAMMA1 * 25 + GAMMA2  # occluded

    # Weight factors.
    values["db_weight_m0_a2_b05"] = 1 + 2 * (1 - mp.mpf(0)) ** mp.mpf("0.5")
    values["db_weight_m075_a2_b05"] = 1 + 2 * (1 - mp.mpf("0.75")) ** mp.mpf("0.5")
    values["oa_weight_m1_a2_b1"] = 1 + 2 * mp.mpf(1) ** 1
    values["oa_weight_m05_a1_b1"] = 1 + 1 * mp.mpf("0.5") ** 1
    values["mask_sum_h1_mdb0_moa1_a2_b1"] = 1 + 1 * 2 * (1 - 0) ** 1 + 2 * mp.mpf(1) ** 1

    # Discounted three-iteration accumulation at gamma 0.8, unit losses.
    g = mp.mpf("0.8")
    values["sequence_total_3_unit"] = g**2 + g + 1

    out = {
        k: (bool(v) if isinstance(v, bool) else mp.nstr(v, 30))
        for k, v in values.items()
    }
    path = Path(__file__).resolve().parent.parent / "tests" / "data" / "reference_values.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
