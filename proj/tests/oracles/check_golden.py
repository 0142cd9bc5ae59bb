#!/usr/bin/env python3
# Copyright (C) 2026 The APCE Authors
# SPDX-License-Identifier: Apache-2.0
"""Fails if the checked-in golden file no longer matches what the oracle produces."""

import json
import sys
import tempfile
from pathlib import Path

here = Path(__file__).parent
sys.path.insert(0, str(here))
import make_golden  # noqa: E402

with tempfile.TemporaryDirectory() as d:
    fresh = Path(d) / "golden.json"
    make_golden.main(str(fresh))
    frozen = json.loads((here.parent / "data" / "golden.json").read_text(encoding="utf-8"))
    if json.loads(fresh.read_text(encoding="utf-8")) != frozen:
        print("golden.json is out of date with the oracle")
        sys.exit(1)
print("golden.json matches the oracle")
