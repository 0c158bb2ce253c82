#!/usr/bin/env python3
"""Generate a rotation-closed codebook asset for the standard 41-bit layout.

Greedy randomized search: draw candidate codewords, keep one when its
Hamming distance to every already-accepted codeword -- and to its own
three rotations -- is at least the family minimum under all four
in-plane rotations. Stops at the target count, the time budget, or when
the acceptance rate collapses.

Usage:
    python tools/gen_codebook.py --out src/arweather/data/families/tagStandard41h12.codes \
        --subset-out src/arweather/data/families/tagStandard41h12_test16.codes
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from arweather.families import _standard_layout  # noqa: E402

NBITS = 41
MIN_HAMMING = 12


def rotations_u64(code: int, perm: np.ndarray) -> list[int]:
    bits = np.array([(code >> (NBITS - 1 - i)) & 1 for i in range(NBITS)], dtype=np.uint8)
    out = []
    cur = bits
    for _ in range(4):
        val = 0
        for b in cur:
            val = (val << 1) | int(b)
        out.append(val)
        cur = cur[perm]
    return out


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", required=True)
    ap.add_argument("--subset-out")
    ap.add_argument("--subset-size", type=int, default=16)
    ap.add_argument("--target", type=int, default=2115)
    ap.add_argument("--seed", type=int, default=41012)
    ap.add_argument("--budget-sec", type=float, default=240.0)
    ap.add_argument("--max-consecutive-rejects", type=int, default=400_000)
    args = ap.parse_args()

    perm = _standard_layout(NBITS).rotation_permutation
    rng = np.random.default_rng(args.seed)

    accepted: list[int] = []
    accepted_rots = np.empty(0, dtype=np.uint64)
    start = time.monotonic()
    rejects_in_a_row = 0
    tried = 0

    while len(accepted) < args.target:
        if time.monotonic() - start > args.budget_sec:
            print(f"time budget reached at {len(accepted)} codes", file=sys.stderr)
            break
        if rejects_in_a_row >= args.max_consecutive_rejects:
            print(f"acceptance collapsed at {len(accepted)} codes", file=sys.stderr)
            break
        batch = rng.integers(0, 1 << NBITS, size=4096, dtype=np.uint64)
        for cand in batch:
            tried += 1
            cand_int = int(cand)
            rots = rotations_u64(cand_int, perm)
            # Self-rotation distances (orientation must be unambiguous).
            if any(bin(rots[0] ^ r).count("1") < MIN_HAMMING for r in rots[1:]):
                rejects_in_a_row += 1
                continue
            ok = True
            if accepted_rots.size:
                for r in rots:
                    d = np.bitwise_count(accepted_rots ^ np.uint64(r))
                    if int(d.min()) < MIN_HAMMING:
                        ok = False
                        break
            if not ok:
                rejects_in_a_row += 1
                continue
            accepted.append(cand_int)
            accepted_rots = np.concatenate(
                [accepted_rots, np.array(rots, dtype=np.uint64)]
            )
            rejects_in_a_row = 0
            if len(accepted) % 128 == 0:
                rate = tried / max(time.monotonic() - start, 1e-9)
                print(
                    f"{len(accepted)} codes after {tried} candidates "
                    f"({rate:,.0f}/s)",
                    file=sys.stderr,
                )
            if len(accepted) >= args.target:
                break

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("".join(f"{c:011x}\n" for c in accepted), encoding="ascii")
    print(f"wrote {len(accepted)} codewords to {out}", file=sys.stderr)

    if args.subset_out:
        subset = accepted[: args.subset_size]
        Path(args.subset_out).write_text(
            "".join(f"{c:011x}\n" for c in subset), encoding="ascii"
        )
        print(f"wrote {len(subset)}-entry test subset to {args.subset_out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
