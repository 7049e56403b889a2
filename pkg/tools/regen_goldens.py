#!/usr/bin/env python3
"""Regenerate the golden RTL bundles under tests/golden/ from the fixtures.

Run after an intentional generator change, then review the diff:

    python3 tools/regen_goldens.py
"""

from __future__ import annotations

import shutil
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from accelkit import model_ir, rtlgen
from accelkit.estimator import GenConfig
from accelkit.quantize import FixedPointFormat, quantize_model

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"
GOLDEN = ROOT / "tests" / "golden"
NAMES = ("linear_small", "mlp", "lstm_tiny")


def main() -> int:
    fmt = FixedPointFormat(16, 8)
    for stem in NAMES:
        graph = model_ir.parse_model((FIXTURES / f"{stem}.json").read_bytes())
        qmodel, report = quantize_model(graph, fmt)
        bundle = rtlgen.generate_rtl(
            qmodel, GenConfig(), quantization=report.to_dict()
        )
        out = GOLDEN / stem
        if out.exists():
            shutil.rmtree(out)
        rtlgen.write_bundle(bundle, out)
        print(f"{stem}: {len(bundle.files)} files")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
